#pragma once

#include <array>

namespace scenecap {

/// Axis-aligned box in center form (pixels). Center form is the native
/// representation for all geometry cues; corner form is derived on demand.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }
};

struct ImageSize {
  double w = 0.0;
  double h = 0.0;
};

/// Per-object geometry cue: [cx/W, cy/H, w/W, h/H, area/(W*H)].
struct ObjGeomCue {
  std::array<double, 5> v{};
};

/// Pairwise geometry cue, subject first:
/// [dx/sqrt(wi*hi), dy/sqrt(wi*hi), wj/wi, hj/hi, areaj/areai,
///  iou, center distance / image diagonal, angle of (dy, dx)].
struct RelGeomCue {
  std::array<double, 8> v{};
};

/// Intersection-over-union of two boxes. Symmetric, in [0, 1];
/// 1 iff the boxes coincide, 0 iff their interiors are disjoint.
double iou(const Box& a, const Box& b);

/// Euclidean distance between centers divided by the image diagonal.
double center_distance_norm(const Box& a, const Box& b, const ImageSize& img);

ObjGeomCue object_geometry_cue(const Box& box, const ImageSize& img);

/// Geometry cue for the ordered pair (subj, obj). The angle is the
/// two-argument arctangent of (dy, dx), range (-pi, pi]; coincident
/// centers map to angle 0.
RelGeomCue relation_geometry_cue(const Box& subj, const Box& obj, const ImageSize& img);

}  // namespace scenecap
