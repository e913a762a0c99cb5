#include "scenecap/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace scenecap {

double iou(const Box& a, const Box& b) {
  // Center-form overlap; algebraically the corner intersection, but exact
  // (overlap = w) when the boxes coincide.
  double iw = std::min({a.w, b.w, 0.5 * (a.w + b.w) - std::abs(b.cx - a.cx)});
  double ih = std::min({a.h, b.h, 0.5 * (a.h + b.h) - std::abs(b.cy - a.cy)});
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  double inter = iw * ih;
  double uni = a.area() + b.area() - inter;
  return inter / uni;
}

double center_distance_norm(const Box& a, const Box& b, const ImageSize& img) {
  double dx = b.cx - a.cx;
  double dy = b.cy - a.cy;
  return std::sqrt(dx * dx + dy * dy) / std::sqrt(img.w * img.w + img.h * img.h);
}

ObjGeomCue object_geometry_cue(const Box& box, const ImageSize& img) {
  ObjGeomCue cue;
  cue.v = {box.cx / img.w, box.cy / img.h, box.w / img.w, box.h / img.h,
           (box.w * box.h) / (img.w * img.h)};
  return cue;
}

RelGeomCue relation_geometry_cue(const Box& subj, const Box& obj, const ImageSize& img) {
  double dx = obj.cx - subj.cx;
  double dy = obj.cy - subj.cy;
  double scale = std::sqrt(subj.w * subj.h);
  RelGeomCue cue;
  cue.v[0] = dx / scale;
  cue.v[1] = dy / scale;
  cue.v[2] = obj.w / subj.w;
  cue.v[3] = obj.h / subj.h;
  cue.v[4] = (obj.w * obj.h) / (subj.w * subj.h);
  cue.v[5] = iou(subj, obj);
  cue.v[6] = center_distance_norm(subj, obj, img);
  // Coincident centers leave the angle undefined; pin it to 0.
  cue.v[7] = (dx == 0.0 && dy == 0.0) ? 0.0 : std::atan2(dy, dx);
  return cue;
}

}  // namespace scenecap
