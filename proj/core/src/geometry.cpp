#include "cdl/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "cdl/errors.hpp"

namespace cdl {

namespace {
inline bool geq(double a, double b, BoundaryConvention bc) {
  return bc == BoundaryConvention::Closed ? a >= b : a > b;
}
inline bool leq(double a, double b, BoundaryConvention bc) {
  return bc == BoundaryConvention::Closed ? a <= b : a < b;
}
}  // namespace

bool Region::overlaps(const Region& o) const {
  return t_min < o.t_max && o.t_min < t_max && x_min < o.x_max && o.x_min < x_max;
}

std::string Region::str() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "[%g,%g]x[%g,%g]", t_min, t_max, x_min, x_max);
  return buf;
}

const char* to_string(CausalRelation r) {
  switch (r) {
    case CausalRelation::Spacelike: return "Spacelike";
    case CausalRelation::PrecedesAB: return "PrecedesAB";
    case CausalRelation::PrecedesBA: return "PrecedesBA";
    case CausalRelation::OrderableAFirst: return "OrderableAFirst";
    case CausalRelation::OrderableBFirst: return "OrderableBFirst";
    case CausalRelation::NotOrderable: return "NotOrderable";
  }
  return "?";
}

// J+(R) = {e : e.t >= t_min, u_e >= u_min(R), v_e >= v_min(R)}.
// The past cone of e reaches widest inside R at the slice t = R.t_min,
// which reduces membership to the two null inequalities plus the time gate.
bool in_causal_future(const Event& e, const Region& r, BoundaryConvention bc) {
  return geq(e.t, r.t_min, bc) && geq(e.t - e.x, r.u_min(), bc) && geq(e.t + e.x, r.v_min(), bc);
}

bool in_causal_past(const Event& e, const Region& r, BoundaryConvention bc) {
  return leq(e.t, r.t_max, bc) && leq(e.t - e.x, r.u_max(), bc) && leq(e.t + e.x, r.v_max(), bc);
}

bool future_intersects(const Region& a, const Region& b, BoundaryConvention bc) {
  return geq(b.t_max, a.t_min, bc) && geq(b.u_max(), a.u_min(), bc) && geq(b.v_max(), a.v_min(), bc);
}

bool past_intersects(const Region& a, const Region& b, BoundaryConvention bc) {
  return future_intersects(b, a, bc);
}

bool contains_in_future(const Region& a, const Region& b, BoundaryConvention bc) {
  return geq(b.t_min, a.t_min, bc) && geq(b.u_min(), a.u_min(), bc) && geq(b.v_min(), a.v_min(), bc);
}

bool contains_in_past(const Region& a, const Region& b, BoundaryConvention bc) {
  return leq(b.t_max, a.t_max, bc) && leq(b.u_max(), a.u_max(), bc) && leq(b.v_max(), a.v_max(), bc);
}

CausalRelation classify_causal(const Region& a, const Region& b, BoundaryConvention bc) {
  if (a.overlaps(b))
    throw OverlappingRegions("classify_causal: regions " + a.str() + " and " + b.str() +
                             " intersect");
  const bool fut = future_intersects(a, b, bc);   // J+(A) meets B
  const bool past = past_intersects(a, b, bc);    // J-(A) meets B
  if (!fut && !past) return CausalRelation::Spacelike;
  if (contains_in_future(a, b, bc) && contains_in_past(b, a, bc)) return CausalRelation::PrecedesAB;
  if (contains_in_future(b, a, bc) && contains_in_past(a, b, bc)) return CausalRelation::PrecedesBA;
  if (!past) return CausalRelation::OrderableAFirst;  // nothing of B precedes A
  if (!fut) return CausalRelation::OrderableBFirst;
  return CausalRelation::NotOrderable;
}

bool precedes_wrt_flat_foliation(const Region& a, const Region& b) {
  return a.t_max < b.t_min;
}

Event boost(const Event& e, double eta) {
  const double ch = std::cosh(eta), sh = std::sinh(eta);
  return Event{e.t * ch - e.x * sh, e.x * ch - e.t * sh};
}

bool precedes_after_boost(const Region& a, const Region& b, double eta) {
  auto corners = [](const Region& r) {
    return std::array<Event, 4>{Event{r.t_min, r.x_min}, Event{r.t_min, r.x_max},
                                Event{r.t_max, r.x_min}, Event{r.t_max, r.x_max}};
  };
  double a_tmax = -1e300, b_tmin = 1e300;
  for (const Event& c : corners(a)) a_tmax = std::max(a_tmax, boost(c, eta).t);
  for (const Event& c : corners(b)) b_tmin = std::min(b_tmin, boost(c, eta).t);
  return a_tmax < b_tmin;
}

}  // namespace cdl
