#include "unitavg/focus.hpp"

#include <charconv>
#include <cmath>
#include <sstream>
#include <vector>

#include "unitavg/error.hpp"

namespace unitavg {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::string& spec) {
  double v = 0.0;
  const char* b = s.data();
  if (!s.empty() && s.front() == '+') ++b;
  const auto [p, ec] = std::from_chars(b, s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw Error("focus '" + spec + "': bad number '" + s + "'");
  }
  return v;
}

Eigen::Index to_index(const std::string& s, const std::string& spec) {
  long long v = -1;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size() || v < 0) {
    throw Error("focus '" + spec + "': bad index '" + s + "'");
  }
  return static_cast<Eigen::Index>(v);
}

void require_index(Eigen::Index k, const Eigen::VectorXd& theta) {
  if (k >= theta.size()) {
    throw DimensionError("focus index " + std::to_string(k) + " out of range for " +
                         std::to_string(theta.size()) + " coefficients");
  }
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

Focus Focus::parse(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() == 2 && parts[0] == "coordinate") {
    return Focus(Coordinate{to_index(parts[1], text)});
  }
  if (parts.size() == 3 && parts[0] == "condmean") {
    const auto coefs = split(parts[1], ',');
    if (coefs.empty()) throw Error("focus '" + text + "': empty weight vector");
    Eigen::VectorXd a(static_cast<Eigen::Index>(coefs.size()));
    for (std::size_t i = 0; i < coefs.size(); ++i) {
      a(static_cast<Eigen::Index>(i)) = to_double(coefs[i], text);
    }
    return Focus(AffineConditionalMean{a, to_double(parts[2], text)});
  }
  if (parts.size() == 3 && parts[0] == "longrun") {
    const Eigen::Index b = to_index(parts[1], text);
    const Eigen::Index l = to_index(parts[2], text);
    if (b == l) throw Error("focus '" + text + "': beta and lambda indices must differ");
    return Focus(LongRunEffect{b, l});
  }
  throw Error("invalid focus '" + text +
              "' (expected coordinate:<k>, condmean:<a1,...,ap>:<b> or longrun:<i>:<j>)");
}

void Focus::check(const Eigen::VectorXd& theta) const {
  std::visit(overloaded{
                 [&](const Coordinate& c) { require_index(c.index, theta); },
                 [&](const AffineConditionalMean& m) {
                   if (m.a.size() != theta.size()) {
                     throw DimensionError("condmean focus has " + std::to_string(m.a.size()) +
                                          " weights for " + std::to_string(theta.size()) +
                                          " coefficients");
                   }
                 },
                 [&](const LongRunEffect& r) {
                   require_index(r.beta, theta);
                   require_index(r.lambda, theta);
                   if (std::abs(1.0 - theta(r.lambda)) <= kLongRunGuard) {
                     throw FocusSingularityError(
                         "long-run effect undefined: lagged-outcome coefficient is " +
                         std::to_string(theta(r.lambda)) + " (|1 - lambda| <= 1e-6)");
                   }
                 },
             },
             v_);
}

double Focus::value(const Eigen::VectorXd& theta) const {
  check(theta);
  return std::visit(overloaded{
                        [&](const Coordinate& c) { return theta(c.index); },
                        [&](const AffineConditionalMean& m) { return m.a.dot(theta) + m.b; },
                        [&](const LongRunEffect& r) {
                          return theta(r.beta) / (1.0 - theta(r.lambda));
                        },
                    },
                    v_);
}

Eigen::VectorXd Focus::gradient(const Eigen::VectorXd& theta) const {
  check(theta);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  std::visit(overloaded{
                 [&](const Coordinate& c) { g(c.index) = 1.0; },
                 [&](const AffineConditionalMean& m) { g = m.a; },
                 [&](const LongRunEffect& r) {
                   const double inv = 1.0 / (1.0 - theta(r.lambda));
                   g(r.beta) = inv;
                   g(r.lambda) = theta(r.beta) * inv * inv;
                 },
             },
             v_);
  return g;
}

std::string Focus::to_string() const {
  std::ostringstream out;
  out.precision(17);
  std::visit(overloaded{
                 [&](const Coordinate& c) { out << "coordinate:" << c.index; },
                 [&](const AffineConditionalMean& m) {
                   out << "condmean:";
                   for (Eigen::Index i = 0; i < m.a.size(); ++i) out << (i ? "," : "") << m.a(i);
                   out << ':' << m.b;
                 },
                 [&](const LongRunEffect& r) { out << "longrun:" << r.beta << ':' << r.lambda; },
             },
             v_);
  return out.str();
}

}  // namespace unitavg
