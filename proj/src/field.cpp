#include "derbox/field.hpp"

#include <cctype>

namespace derbox {

std::string Scalar::str() const {
  if (p_ > 0) return std::to_string(r_);
  return q_.str();
}

Field Field::parse(const std::string& s) {
  if (s == "Q" || s == "q") return Field{0};
  if ((s.size() >= 2) && (s[0] == 'F' || s[0] == 'f')) {
    int64_t p = 0;
    for (size_t i = 1; i < s.size(); ++i) {
      if (!std::isdigit((unsigned char)s[i])) fail(Err::Parse, "bad field spec '" + s + "'");
      p = p * 10 + (s[i] - '0');
      if (p > 1'000'003) fail(Err::Parse, "field modulus too large: " + s);
    }
    if (p < 2) fail(Err::Parse, "field modulus must be >= 2: " + s);
    for (int64_t d = 2; d * d <= p; ++d)
      if (p % d == 0) fail(Err::Parse, "field modulus must be prime: " + s);
    return Field{p};
  }
  fail(Err::Parse, "bad field spec '" + s + "' (expected F<p> or Q)");
}

Scalar parse_scalar(const Field& f, const std::string& text) {
  if (text.empty()) fail(Err::Parse, "empty scalar literal");
  auto slash = text.find('/');
  auto parse_int = [](const std::string& t) -> int64_t {
    size_t i = 0;
    bool neg = false;
    if (i < t.size() && (t[i] == '+' || t[i] == '-')) neg = (t[i++] == '-');
    if (i >= t.size()) fail(Err::Parse, "bad integer literal '" + t + "'");
    int64_t v = 0;
    for (; i < t.size(); ++i) {
      if (!std::isdigit((unsigned char)t[i])) fail(Err::Parse, "bad integer literal '" + t + "'");
      v = v * 10 + (t[i] - '0');
      if (v > (int64_t(1) << 60)) fail(Err::Parse, "integer literal too large '" + t + "'");
    }
    return neg ? -v : v;
  };
  if (slash == std::string::npos) return f.from_int(parse_int(text));
  int64_t num = parse_int(text.substr(0, slash));
  int64_t den = parse_int(text.substr(slash + 1));
  if (den == 0) fail(Err::Parse, "zero denominator in '" + text + "'");
  return f.from_int(num) / f.from_int(den);
}

}  // namespace derbox
