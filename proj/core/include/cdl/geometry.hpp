#pragma once
#include <string>

namespace cdl {

/// Spacetime point in 1+1D Minkowski coordinates, c = 1.
struct Event {
  double t = 0.0;
  double x = 0.0;
};

/// Compact axis-aligned spacetime rectangle [t_min,t_max] x [x_min,x_max].
/// Degenerate spatial extent (x_min == x_max) is allowed for pointlike supports.
struct Region {
  double t_min = 0.0, t_max = 0.0;
  double x_min = 0.0, x_max = 0.0;

  // Null-coordinate extremes, u = t - x and v = t + x.
  double u_min() const { return t_min - x_max; }
  double u_max() const { return t_max - x_min; }
  double v_min() const { return t_min + x_min; }
  double v_max() const { return t_max + x_max; }

  bool valid() const { return t_min < t_max && x_min <= x_max; }
  bool valid_interior() const { return t_min < t_max && x_min < x_max; }
  bool overlaps(const Region& o) const;
  std::string str() const;
};

/// Most specific causal relation between two disjoint compact regions.
enum class CausalRelation {
  Spacelike,
  PrecedesAB,
  PrecedesBA,
  OrderableAFirst,
  OrderableBFirst,
  NotOrderable,
};

const char* to_string(CausalRelation r);

/// Whether null-touching (boundary) contacts count as causally related.
/// J+/J- are closed sets, so Closed is the default everywhere.
enum class BoundaryConvention { Closed, Open };

/// e in J+(R): exists p in R with e.t >= p.t and |e.x - p.x| <= e.t - p.t.
/// Closed form in null coordinates; no sampling.
bool in_causal_future(const Event& e, const Region& r,
                      BoundaryConvention bc = BoundaryConvention::Closed);
bool in_causal_past(const Event& e, const Region& r,
                    BoundaryConvention bc = BoundaryConvention::Closed);

/// J+(A) intersects B / J-(A) intersects B, exactly from corner extremes.
bool future_intersects(const Region& a, const Region& b,
                       BoundaryConvention bc = BoundaryConvention::Closed);
bool past_intersects(const Region& a, const Region& b,
                     BoundaryConvention bc = BoundaryConvention::Closed);

/// B contained in J+(A) / J-(A).
bool contains_in_future(const Region& a, const Region& b,
                        BoundaryConvention bc = BoundaryConvention::Closed);
bool contains_in_past(const Region& a, const Region& b,
                      BoundaryConvention bc = BoundaryConvention::Closed);

/// Throws OverlappingRegions when A and B intersect.
CausalRelation classify_causal(const Region& a, const Region& b,
                               BoundaryConvention bc = BoundaryConvention::Closed);

/// A.t_max < B.t_min in the lab foliation.
bool precedes_wrt_flat_foliation(const Region& a, const Region& b);

/// Active boost with rapidity eta: t' = t cosh(eta) - x sinh(eta).
Event boost(const Event& e, double eta);

/// Whether the boosted image of A entirely precedes the boosted image of B
/// in the boosted frame's time (corner extremes of the mapped parallelograms).
bool precedes_after_boost(const Region& a, const Region& b, double eta);

}  // namespace cdl
