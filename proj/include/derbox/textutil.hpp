#pragma once

#include <regex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "derbox/errors.hpp"

namespace derbox::textutil {

inline const std::regex kNumberRe(R"(^-?[0-9]+(/[0-9]+)?$)");
inline const std::regex kIdentRe(R"(^[A-Za-z][A-Za-z0-9_]*$)");
inline const std::regex kVertexRe(R"(^[A-Za-z0-9_]+$)");

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

// Splits an expression token list into (sign, term-string) pairs.
inline std::vector<std::pair<int, std::string>> signed_terms(const std::vector<std::string>& toks,
                                                             int line) {
  std::vector<std::pair<int, std::string>> out;
  int sign = 1;
  bool pending = true;  // expecting a term (possibly after a sign)
  for (const auto& t : toks) {
    if (t == "+" || t == "-") {
      if (!pending) {
        sign = (t == "-") ? -1 : 1;
        pending = true;
      } else {
        sign *= (t == "-") ? -1 : 1;
      }
      continue;
    }
    std::string body = t;
    while (!body.empty() && (body[0] == '-' || body[0] == '+')) {
      if (body[0] == '-') sign = -sign;
      body = body.substr(1);
    }
    if (body.empty()) fail(Err::Parse, "line " + std::to_string(line) + ": dangling sign");
    out.push_back({sign, body});
    sign = 1;
    pending = false;
  }
  if (pending && !out.empty())
    fail(Err::Parse, "line " + std::to_string(line) + ": expression ends with a sign");
  return out;
}

inline std::vector<std::string> split_star(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == '*') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace derbox::textutil
