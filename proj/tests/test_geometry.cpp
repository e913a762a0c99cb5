#include <cmath>

#include "doctest.h"
#include "scenecap/geometry.hpp"
#include "scenecap/util.hpp"

using namespace scenecap;

namespace {

// Corner-form interval oracle, written independently of the implementation.
double oracle_iou(const Box& a, const Box& b) {
  double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
  double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
  double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  double ox = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
  double oy = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
  double inter = ox * oy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// Unit-cell rasterization for integer-corner boxes: counts cells covered by
// each box and by both.
double raster_iou(const Box& a, const Box& b) {
  auto covers = [](const Box& box, int x, int y) {
    return box.cx - box.w / 2 <= x && x + 1 <= box.cx + box.w / 2 && box.cy - box.h / 2 <= y &&
           y + 1 <= box.cy + box.h / 2;
  };
  int inter = 0, in_a = 0, in_b = 0;
  for (int x = -64; x < 64; ++x)
    for (int y = -64; y < 64; ++y) {
      bool ca = covers(a, x, y), cb = covers(b, x, y);
      in_a += ca;
      in_b += cb;
      inter += ca && cb;
    }
  return static_cast<double>(inter) / static_cast<double>(in_a + in_b - inter);
}

Box random_box(Rng& rng) {
  Box b;
  b.w = rng.uniform(0.5, 12.0);
  b.h = rng.uniform(0.5, 12.0);
  b.cx = rng.uniform(-10.0, 20.0);
  b.cy = rng.uniform(-10.0, 20.0);
  return b;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("iou identity and disjoint cases") {
  Box a{5, 5, 2, 2};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(Box{1, 1, 2, 2}, Box{2, 1, 2, 2}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(Box{5, 5, 2, 2}, Box{7, 5, 1, 1}) == 0.0);
  // Same values from the corner-form oracle.
  CHECK(oracle_iou(Box{1, 1, 2, 2}, Box{2, 1, 2, 2}) == doctest::Approx(1.0 / 3.0));
  CHECK(oracle_iou(Box{5, 5, 2, 2}, Box{7, 5, 1, 1}) == 0.0);
}

TEST_CASE("iou is symmetric and matches the corner-form oracle") {
  Rng rng(7);
  for (int i = 0; i < 400; ++i) {
    Box a = random_box(rng), b = random_box(rng);
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, b) == doctest::Approx(oracle_iou(a, b)).epsilon(1e-12));
    double v = iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("iou matches a rasterized pixel-count oracle on integer boxes") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    Box a, b;
    double ax = static_cast<double>(rng.uniform_int(-8, 8));
    double ay = static_cast<double>(rng.uniform_int(-8, 8));
    a.w = static_cast<double>(rng.uniform_int(1, 10));
    a.h = static_cast<double>(rng.uniform_int(1, 10));
    a.cx = ax + a.w / 2;
    a.cy = ay + a.h / 2;
    double bx = static_cast<double>(rng.uniform_int(-8, 8));
    double by = static_cast<double>(rng.uniform_int(-8, 8));
    b.w = static_cast<double>(rng.uniform_int(1, 10));
    b.h = static_cast<double>(rng.uniform_int(1, 10));
    b.cx = bx + b.w / 2;
    b.cy = by + b.h / 2;
    CHECK(iou(a, b) == doctest::Approx(raster_iou(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("object geometry cue") {
  ImageSize img{10, 10};
  auto cue = object_geometry_cue(Box{5, 5, 10, 10}, img);
  CHECK(cue.v == std::array<double, 5>{0.5, 0.5, 1, 1, 1});
  cue = object_geometry_cue(Box{2.5, 5, 5, 10}, img);
  CHECK(cue.v == std::array<double, 5>{0.25, 0.5, 0.5, 1, 0.5});
  // Direct evaluation oracle on a non-square image.
  cue = object_geometry_cue(Box{3, 4, 2, 6}, ImageSize{20, 10});
  CHECK(cue.v[0] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(cue.v[1] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(cue.v[2] == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(cue.v[3] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(cue.v[4] == doctest::Approx(0.06).epsilon(1e-15));
}

TEST_CASE("relation geometry cue on identical boxes") {
  ImageSize img{10, 10};
  Box a{5, 5, 2, 2};
  auto cue = relation_geometry_cue(a, a, img);
  CHECK(cue.v == std::array<double, 8>{0, 0, 1, 1, 1, 1, 0, 0});
}

TEST_CASE("relation geometry cue, horizontal and vertical offsets") {
  ImageSize img{10, 10};
  auto cue = relation_geometry_cue(Box{5, 5, 2, 2}, Box{7, 5, 1, 1}, img);
  CHECK(cue.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cue.v[1] == 0.0);
  CHECK(cue.v[2] == doctest::Approx(0.5));
  CHECK(cue.v[3] == doctest::Approx(0.5));
  CHECK(cue.v[4] == doctest::Approx(0.25));
  CHECK(cue.v[5] == 0.0);
  CHECK(cue.v[6] == doctest::Approx(2.0 / std::sqrt(200.0)).epsilon(1e-12));
  CHECK(cue.v[7] == 0.0);

  cue = relation_geometry_cue(Box{5, 5, 2, 2}, Box{5, 7, 2, 2}, img);
  CHECK(cue.v[0] == 0.0);
  CHECK(cue.v[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cue.v[7] == doctest::Approx(3.14159265358979323846 / 2).epsilon(1e-15));
}

TEST_CASE("center distance normalized by the diagonal") {
  ImageSize img{10, 10};
  Box a{5, 5, 2, 2};
  CHECK(center_distance_norm(a, a, img) == 0.0);
  CHECK(center_distance_norm(Box{0, 0, 1, 1}, Box{10, 10, 1, 1}, img) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(center_distance_norm(Box{5, 5, 2, 2}, Box{7, 5, 2, 2}, img) ==
        doctest::Approx(2.0 / std::sqrt(200.0)).epsilon(1e-12));
}

TEST_CASE("relation cue identity row holds for arbitrary boxes") {
  Rng rng(3);
  ImageSize img{40, 30};
  for (int i = 0; i < 200; ++i) {
    Box a = random_box(rng);
    auto cue = relation_geometry_cue(a, a, img);
    CHECK(cue.v == std::array<double, 8>{0, 0, 1, 1, 1, 1, 0, 0});
  }
}

TEST_CASE("relation cue component ranges") {
  Rng rng(5);
  ImageSize img{25, 25};
  constexpr double kPi = 3.14159265358979323846;
  for (int i = 0; i < 500; ++i) {
    Box a = random_box(rng), b = random_box(rng);
    auto cue = relation_geometry_cue(a, b, img);
    CHECK(cue.v[5] >= 0.0);
    CHECK(cue.v[5] <= 1.0);
    CHECK(cue.v[7] > -kPi);
    CHECK(cue.v[7] <= kPi);
  }
}

TEST_CASE("translation invariance of the relation cue") {
  Rng rng(9);
  ImageSize img{50, 40};
  for (int i = 0; i < 200; ++i) {
    Box a = random_box(rng), b = random_box(rng);
    double dx = rng.uniform(-5, 5), dy = rng.uniform(-5, 5);
    Box a2 = a, b2 = b;
    a2.cx += dx;
    a2.cy += dy;
    b2.cx += dx;
    b2.cy += dy;
    auto c1 = relation_geometry_cue(a, b, img);
    auto c2 = relation_geometry_cue(a2, b2, img);
    for (int k : {0, 1, 2, 3, 4, 5, 7})
      CHECK(c1.v[static_cast<size_t>(k)] ==
            doctest::Approx(c2.v[static_cast<size_t>(k)]).epsilon(1e-9));
    // r4 is unchanged too because the image size did not change.
    CHECK(c1.v[6] == doctest::Approx(c2.v[6]).epsilon(1e-9));
  }
}

}  // TEST_SUITE
