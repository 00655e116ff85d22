#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <string>
#include <vector>

#include "derbox/errors.hpp"

namespace derbox {

using Rat = boost::multiprecision::cpp_rational;

// Exact scalar over a prime field F_p (small p) or over the rationals.
// p == 0 selects rational mode.  Every scalar carries its field tag so that
// accidental cross-field arithmetic is caught instead of silently corrupting.
class Scalar {
 public:
  Scalar() = default;
  Scalar(int64_t p, int64_t value) : p_(p) {
    if (p_ < 0) fail(Err::Internal, "negative modulus");
    if (p_ > 0) {
      r_ = value % p_;
      if (r_ < 0) r_ += p_;
    } else {
      q_ = value;
    }
  }
  Scalar(int64_t p, const Rat& q) : p_(p), q_(q) {
    if (p != 0) fail(Err::Internal, "rational payload needs p==0");
  }

  int64_t modulus() const { return p_; }
  bool is_zero() const { return p_ > 0 ? r_ == 0 : q_ == 0; }
  bool is_one() const { return p_ > 0 ? r_ == 1 % p_ : q_ == 1; }
  int64_t residue() const { return r_; }
  const Rat& rational() const { return q_; }

  friend Scalar operator+(const Scalar& a, const Scalar& b) {
    a.check(b);
    if (a.p_ > 0) return Scalar(a.p_, a.r_ + b.r_);
    return Scalar(0, Rat(a.q_ + b.q_));
  }
  friend Scalar operator-(const Scalar& a, const Scalar& b) {
    a.check(b);
    if (a.p_ > 0) return Scalar(a.p_, a.r_ - b.r_);
    return Scalar(0, Rat(a.q_ - b.q_));
  }
  friend Scalar operator*(const Scalar& a, const Scalar& b) {
    a.check(b);
    if (a.p_ > 0) return Scalar(a.p_, a.r_ * b.r_);
    return Scalar(0, Rat(a.q_ * b.q_));
  }
  friend Scalar operator/(const Scalar& a, const Scalar& b) { return a * b.inverse(); }
  Scalar operator-() const {
    if (p_ > 0) return Scalar(p_, -r_);
    return Scalar(0, Rat(-q_));
  }
  Scalar inverse() const {
    if (is_zero()) fail(Err::DivisionByZero, "inverse of zero");
    if (p_ == 0) return Scalar(0, Rat(1 / q_));
    return pow_mod();  // Fermat: r^(p-2), fine for the small primes we use
  }

  Scalar& operator+=(const Scalar& o) { return *this = *this + o; }
  Scalar& operator-=(const Scalar& o) { return *this = *this - o; }
  Scalar& operator*=(const Scalar& o) { return *this = *this * o; }

  friend bool operator==(const Scalar& a, const Scalar& b) {
    if (a.p_ != b.p_) return false;
    return a.p_ > 0 ? a.r_ == b.r_ : a.q_ == b.q_;
  }
  friend bool operator!=(const Scalar& a, const Scalar& b) { return !(a == b); }
  friend bool operator<(const Scalar& a, const Scalar& b) {
    if (a.p_ != b.p_) return a.p_ < b.p_;
    return a.p_ > 0 ? a.r_ < b.r_ : a.q_ < b.q_;
  }

  std::string str() const;

 private:
  void check(const Scalar& o) const {
    if (p_ != o.p_) fail(Err::FieldMismatch, "scalars from different fields");
  }
  Scalar pow_mod() const {  // r_^(p-2) mod p, p prime
    int64_t base = r_ % p_, e = p_ - 2, acc = 1;
    while (e > 0) {
      if (e & 1) acc = acc * base % p_;
      base = base * base % p_;
      e >>= 1;
    }
    return Scalar(p_, acc);
  }

  int64_t p_ = 0;
  int64_t r_ = 0;
  Rat q_ = 0;
};

// Ground-field descriptor.  p == 0 means Q.
struct Field {
  int64_t p = 0;

  Scalar zero() const { return Scalar(p, int64_t{0}); }
  Scalar one() const { return Scalar(p, int64_t{1}); }
  Scalar from_int(int64_t v) const { return Scalar(p, v); }
  bool is_rational() const { return p == 0; }

  // All field elements; only meaningful (and only allowed) for F_p.
  std::vector<Scalar> elements() const {
    if (p == 0) fail(Err::PreconditionViolated, "cannot enumerate Q");
    std::vector<Scalar> out;
    out.reserve(size_t(p));
    for (int64_t i = 0; i < p; ++i) out.push_back(Scalar(p, i));
    return out;
  }

  static Field parse(const std::string& s);
  std::string str() const { return p == 0 ? "Q" : "F" + std::to_string(p); }

  friend bool operator==(const Field& a, const Field& b) { return a.p == b.p; }
  friend bool operator!=(const Field& a, const Field& b) { return a.p != b.p; }
};

// Parse a scalar literal: integer or fraction "a/b" (rational mode), integer
// residue for F_p.
Scalar parse_scalar(const Field& f, const std::string& text);

}  // namespace derbox
