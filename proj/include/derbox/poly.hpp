#pragma once

#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "derbox/field.hpp"
#include "derbox/linalg.hpp"

namespace derbox {

// Univariate polynomial with exact coefficients, ascending powers.
class Poly {
 public:
  Poly() = default;
  explicit Poly(Field f) : field_(f) {}
  Poly(Field f, std::vector<Scalar> coeffs) : field_(f), c_(std::move(coeffs)) { trim(); }
  static Poly constant(Field f, const Scalar& v) { return Poly(f, {v}); }
  static Poly x(Field f) { return Poly(f, {f.zero(), f.one()}); }

  const Field& field() const { return field_; }
  int degree() const { return int(c_.size()) - 1; }  // -1 for zero
  bool is_zero() const { return c_.empty(); }
  bool is_constant() const { return c_.size() <= 1; }
  Scalar coeff(int i) const { return i < int(c_.size()) ? c_[i] : field_.zero(); }
  const std::vector<Scalar>& coeffs() const { return c_; }
  Scalar leading() const { return c_.empty() ? field_.zero() : c_.back(); }

  friend Poly operator+(const Poly& a, const Poly& b);
  friend Poly operator-(const Poly& a, const Poly& b);
  friend Poly operator*(const Poly& a, const Poly& b);
  Poly operator*(const Scalar& s) const;
  Poly operator-() const { return *this * (-field_.one()); }
  friend bool operator==(const Poly& a, const Poly& b) { return a.c_ == b.c_; }
  friend bool operator!=(const Poly& a, const Poly& b) { return !(a == b); }
  friend bool operator<(const Poly& a, const Poly& b) { return a.c_ < b.c_; }

  // Quotient and remainder; divisor must be nonzero.
  std::pair<Poly, Poly> divmod(const Poly& d) const;
  Poly monic() const;
  static Poly gcd(const Poly& a, const Poly& b);
  static Poly lcm(const Poly& a, const Poly& b);
  // (g, x, y) with x*a + y*b = g = gcd(a,b), g monic (or zero).
  static std::tuple<Poly, Poly, Poly> ext_gcd(const Poly& a, const Poly& b);

  Scalar eval(const Scalar& v) const;
  Mat eval_matrix(const Mat& m) const;  // p(M) for square M

  // Roots in the ground field with multiplicities, plus the rootless residual
  // (constant when the polynomial splits).
  struct RootData;
  RootData roots() const;

  // Some irreducible factor of degree >= 2 of a rootless polynomial, used for
  // error reporting when a required root set fails to split.
  std::optional<Poly> irreducible_witness() const;

  std::string str(const std::string& var = "t") const;

 private:
  void trim() {
    while (!c_.empty() && c_.back().is_zero()) c_.pop_back();
  }
  Field field_;
  std::vector<Scalar> c_;
};

struct Poly::RootData {
  std::vector<std::pair<Scalar, int>> roots;
  Poly residual;
};

}  // namespace derbox
