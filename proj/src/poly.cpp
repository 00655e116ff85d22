#include "derbox/poly.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <sstream>

namespace derbox {

using boost::multiprecision::cpp_int;

Poly operator+(const Poly& a, const Poly& b) {
  Field f = a.field_;
  std::vector<Scalar> c(std::max(a.c_.size(), b.c_.size()), f.zero());
  for (size_t i = 0; i < c.size(); ++i) c[i] = a.coeff(int(i)) + b.coeff(int(i));
  return Poly(f, std::move(c));
}

Poly operator-(const Poly& a, const Poly& b) { return a + (-b); }

Poly operator*(const Poly& a, const Poly& b) {
  Field f = a.field_;
  if (a.is_zero() || b.is_zero()) return Poly(f);
  std::vector<Scalar> c(a.c_.size() + b.c_.size() - 1, f.zero());
  for (size_t i = 0; i < a.c_.size(); ++i)
    for (size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
  return Poly(f, std::move(c));
}

Poly Poly::operator*(const Scalar& s) const {
  std::vector<Scalar> c = c_;
  for (auto& v : c) v = v * s;
  return Poly(field_, std::move(c));
}

std::pair<Poly, Poly> Poly::divmod(const Poly& d) const {
  if (d.is_zero()) fail(Err::DivisionByZero, "polynomial division by zero");
  Poly r = *this;
  std::vector<Scalar> q(std::max<int>(0, degree() - d.degree() + 1), field_.zero());
  Scalar lead = d.leading().inverse();
  while (!r.is_zero() && r.degree() >= d.degree()) {
    int k = r.degree() - d.degree();
    Scalar factor = r.leading() * lead;
    q[k] = factor;
    std::vector<Scalar> shift(k, field_.zero());
    shift.push_back(factor);
    r = r - d * Poly(field_, shift);
  }
  return {Poly(field_, std::move(q)), r};
}

Poly Poly::monic() const {
  if (is_zero()) return *this;
  return *this * leading().inverse();
}

Poly Poly::gcd(const Poly& a, const Poly& b) {
  Poly x = a, y = b;
  while (!y.is_zero()) {
    Poly r = x.divmod(y).second;
    x = y;
    y = r;
  }
  return x.monic();
}

Poly Poly::lcm(const Poly& a, const Poly& b) {
  if (a.is_zero() || b.is_zero()) return Poly(a.field_);
  Poly g = gcd(a, b);
  return (a * b).divmod(g).first.monic();
}

std::tuple<Poly, Poly, Poly> Poly::ext_gcd(const Poly& a, const Poly& b) {
  Field f = a.field_;
  Poly r0 = a, r1 = b;
  Poly s0 = Poly(f, {f.one()}), s1 = Poly(f);
  Poly t0 = Poly(f), t1 = Poly(f, {f.one()});
  while (!r1.is_zero()) {
    auto [q, r] = r0.divmod(r1);
    Poly s2 = s0 - q * s1, t2 = t0 - q * t1;
    r0 = r1;
    r1 = r;
    s0 = s1;
    s1 = s2;
    t0 = t1;
    t1 = t2;
  }
  if (r0.is_zero()) return {r0, s0, t0};
  Scalar lead = r0.leading().inverse();
  return {r0 * lead, s0 * lead, t0 * lead};
}

Scalar Poly::eval(const Scalar& v) const {
  Scalar acc = field_.zero();
  for (int i = degree(); i >= 0; --i) acc = acc * v + c_[i];
  return acc;
}

Mat Poly::eval_matrix(const Mat& m) const {
  if (m.rows != m.cols) fail(Err::Internal, "p(M) needs square M");
  Mat acc(m.field, m.rows, m.rows);
  for (int i = degree(); i >= 0; --i) {
    acc = acc * m;
    for (int d = 0; d < m.rows; ++d) acc.at(d, d) += c_[i];
  }
  return acc;
}

namespace {

// Rational root candidates of an integer polynomial via divisor enumeration.
std::vector<cpp_int> divisors(cpp_int n) {
  if (n < 0) n = -n;
  std::vector<cpp_int> out;
  if (n == 0) return out;
  for (cpp_int d = 1; d * d <= n; ++d) {
    if (n % d == 0) {
      out.push_back(d);
      out.push_back(n / d);
    }
    if (d > 200000) fail(Err::ResourceCeiling, "divisor enumeration too large");
  }
  return out;
}

}  // namespace

Poly::RootData Poly::roots() const {
  RootData rd;
  rd.residual = *this;
  if (is_constant()) return rd;
  if (field_.p > 0) {
    for (const Scalar& v : field_.elements()) {
      while (rd.residual.degree() >= 1 && rd.residual.eval(v).is_zero()) {
        std::vector<Scalar> lin = {-v, field_.one()};
        rd.residual = rd.residual.divmod(Poly(field_, lin)).first;
        bool found = false;
        for (auto& p : rd.roots)
          if (p.first == v) {
            ++p.second;
            found = true;
          }
        if (!found) rd.roots.push_back({v, 1});
      }
    }
    return rd;
  }
  // Rational roots: clear denominators, then p/q with p | a0, q | an.
  cpp_int common = 1;
  for (const Scalar& s : c_) common = boost::multiprecision::lcm(common, denominator(s.rational()));
  std::vector<cpp_int> ic;
  for (const Scalar& s : c_) {
    Rat scaled = s.rational() * common;
    ic.push_back(numerator(scaled));
  }
  int lo = 0;
  while (lo < int(ic.size()) && ic[lo] == 0) ++lo;  // factor out t^lo
  for (int k = 0; k < lo; ++k) {
    bool found = false;
    for (auto& p : rd.roots)
      if (p.first.is_zero()) {
        ++p.second;
        found = true;
      }
    if (!found) rd.roots.push_back({field_.zero(), 1});
  }
  if (lo > 0) {
    std::vector<Scalar> shifted(c_.begin() + lo, c_.end());
    rd.residual = Poly(field_, shifted);
    auto rest = rd.residual.roots();
    for (auto& r : rest.roots) {
      bool found = false;
      for (auto& p : rd.roots)
        if (p.first == r.first) {
          p.second += r.second;
          found = true;
        }
      if (!found) rd.roots.push_back(r);
    }
    rd.residual = rest.residual;
    return rd;
  }
  auto nums = divisors(ic.front());
  auto dens = divisors(ic.back());
  for (const cpp_int& pn : nums)
    for (const cpp_int& qd : dens)
      for (int sign = 1; sign >= -1; sign -= 2) {
        Rat cand = Rat(sign * pn, qd);
        Scalar v(0, cand);
        while (rd.residual.degree() >= 1 && rd.residual.eval(v).is_zero()) {
          std::vector<Scalar> lin = {-v, field_.one()};
          rd.residual = rd.residual.divmod(Poly(field_, lin)).first;
          bool found = false;
          for (auto& p : rd.roots)
            if (p.first == v) {
              ++p.second;
              found = true;
            }
          if (!found) rd.roots.push_back({v, 1});
        }
      }
  return rd;
}

std::optional<Poly> Poly::irreducible_witness() const {
  // Expects a rootless polynomial of degree >= 2; finds an irreducible factor.
  if (degree() < 2) return std::nullopt;
  if (field_.p == 0) {
    // No linear factors by assumption; quadratics and cubics are irreducible.
    if (degree() <= 3) return monic();
    // Try small monic quadratic integer factors; fall back to the whole thing.
    for (int64_t b = -20; b <= 20; ++b)
      for (int64_t c0 = -20; c0 <= 20; ++c0) {
        Poly q(field_, {field_.from_int(c0), field_.from_int(b), field_.one()});
        if (divmod(q).second.is_zero()) {
          if (q.roots().roots.empty()) return q;
        }
      }
    return monic();
  }
  // F_p: trial division by monic polynomials of increasing degree.
  std::vector<Poly> monics_prev;  // degree-k monic polys built iteratively
  std::vector<Poly> current;
  current.push_back(Poly(field_, {field_.one()}));  // degree 0: the unit
  for (int deg = 1; deg <= degree() / 2; ++deg) {
    std::vector<Poly> next;
    for (const Poly& base : current)
      for (const Scalar& v : field_.elements()) {
        std::vector<Scalar> c(size_t(deg) + 1, field_.zero());
        for (int i = 0; i < base.degree() + 1; ++i) c[size_t(i) + 1] = base.coeff(i);
        c[0] = v;  // every monic degree-d poly is (monic degree d-1)*t + const
        next.push_back(Poly(field_, c));
      }
    current = next;
    if (deg < 2) continue;
    for (const Poly& q : current) {
      if (q.degree() != deg) continue;
      if (!divmod(q).second.is_zero()) continue;
      if (!q.roots().roots.empty()) continue;
      bool has_small_factor = false;
      for (const Poly& s : monics_prev)
        if (s.degree() >= 2 && q.divmod(s).second.is_zero()) has_small_factor = true;
      if (!has_small_factor) return q.monic();
    }
    for (const Poly& q : current) monics_prev.push_back(q);
    if (monics_prev.size() > 500000) fail(Err::ResourceCeiling, "factor search too large");
  }
  return monic();  // no proper factor found: the polynomial itself is irreducible
}

std::string Poly::str(const std::string& var) const {
  if (is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (int i = 0; i <= degree(); ++i) {
    if (c_[i].is_zero()) continue;
    if (!first) os << " + ";
    first = false;
    if (i == 0 || !c_[i].is_one()) os << c_[i].str();
    if (i > 0 && !c_[i].is_one()) os << "*";
    if (i == 1) os << var;
    if (i > 1) os << var << "^" << i;
  }
  return os.str();
}

}  // namespace derbox
