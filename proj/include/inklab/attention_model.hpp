#pragma once

// Closed-form model of how a gold passage competes with weak and hard
// distractors for softmax attention mass, plus a token-level brute-force
// softmax that the closed form is checked against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inklab/category.hpp"
#include "inklab/errors.hpp"

namespace inklab {

// Margins with |value| above this are rejected: exp(-margin) would overflow
// or flush to a value that silently poisons later fits.
inline constexpr double kMaxMarginMagnitude = 700.0;

// Gold-over-distractor logit margins. `delta_o` is optional because it is
// rarely measured; when absent the "other tokens" term contributes nothing.
struct LogitMargins {
  double delta_e = 0.0;
  double delta_h = 0.0;
  std::optional<double> delta_o;

  // Validating builder. With `require_harder`, delta_h < delta_e must hold;
  // violations raise rather than being reordered.
  static LogitMargins make(double delta_e, double delta_h, std::optional<double> delta_o = {},
                           bool require_harder = false) {
    auto check = [](double v, const char* name) {
      if (!std::isfinite(v)) throw DomainError(std::string("margin ") + name + " is not finite");
    };
    check(delta_e, "delta_e");
    check(delta_h, "delta_h");
    if (delta_o) check(*delta_o, "delta_o");
    if (require_harder && !(delta_h < delta_e)) {
      throw ArgumentError("hard margin delta_h=" + std::to_string(delta_h) +
                          " is not below weak margin delta_e=" + std::to_string(delta_e));
    }
    return LogitMargins{delta_e, delta_h, delta_o};
  }
};

// Token budget of one context. Units are caller-chosen (tokens or whole
// documents) as long as the margins were measured consistently.
struct CompositionCounts {
  std::size_t gold_tokens = 1;
  std::size_t distractor_tokens = 0;
  std::size_t other_tokens = 0;
  double hard_fraction = 0.0;

  static CompositionCounts make(std::size_t gold, std::size_t distractor, std::size_t other,
                                double hard_fraction) {
    if (gold < 1) throw ArgumentError("gold_tokens must be at least 1");
    if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) {
      throw RangeError("hard_fraction " + std::to_string(hard_fraction) + " outside [0,1]");
    }
    return CompositionCounts{gold, distractor, other, hard_fraction};
  }

  std::size_t total_tokens() const { return gold_tokens + distractor_tokens + other_tokens; }
};

// Aggregate softmax-denominator contributions, relative to the gold logit:
// a from weak distractors, b from hard distractors, c from other tokens.
struct MixtureCoefficients {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double gamma() const { return b - a; }
};

inline MixtureCoefficients coefficients(const LogitMargins& margins, const CompositionCounts& counts) {
  auto weight = [](double delta, const char* name) {
    if (!std::isfinite(delta) || std::fabs(delta) > kMaxMarginMagnitude) {
      throw DomainError(std::string("margin ") + name + "=" + std::to_string(delta) +
                        " overflows exp(-margin); |margin| must be <= 700");
    }
    return std::exp(-delta);
  };
  const auto td = static_cast<double>(counts.distractor_tokens);
  MixtureCoefficients out;
  out.a = td * weight(margins.delta_e, "delta_e");
  out.b = td * weight(margins.delta_h, "delta_h");
  if (margins.delta_o) out.c = static_cast<double>(counts.other_tokens) * weight(*margins.delta_o, "delta_o");
  return out;
}

namespace detail {
inline void check_proportion(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw RangeError("hard proportion p=" + std::to_string(p) + " outside [0,1]");
}
}  // namespace detail

/// Attention mass on the gold passage at hard proportion p:
/// 1 / (1 + (1-p)a + pb + c).
inline double gold_attention(const MixtureCoefficients& k, double p) {
  detail::check_proportion(p);
  return 1.0 / (1.0 + (1.0 - p) * k.a + p * k.b + k.c);
}

struct AttentionDerivatives {
  double fprime = 0.0;
  double fsecond = 0.0;
};

/// First and second derivative of gold_attention in p. With
/// D(p) = 1 + a + c + p(b - a): f' = -(b-a)/D^2, f'' = 2(b-a)^2/D^3.
/// Strictly decreasing and strictly convex whenever b > a.
inline AttentionDerivatives gold_attention_derivatives(const MixtureCoefficients& k, double p) {
  detail::check_proportion(p);
  const double g = k.gamma();
  const double d = 1.0 + k.a + k.c + p * g;
  return {-g / (d * d), 2.0 * g * g / (d * d * d)};
}

/// Large-context approximation that drops the constant 1 (and c) from the
/// denominator: (1/a) / (1 + p(b/a - 1)). Vertical position is set by 1/a,
/// shape by b/a alone.
inline double simplified_gold_attention(const MixtureCoefficients& k, double p) {
  detail::check_proportion(p);
  if (!(k.a > 0.0)) throw DegenerateError("simplified form needs a > 0");
  return (1.0 / k.a) / (1.0 + p * (k.b / k.a - 1.0));
}

/// Fraction of the distractor denominator mass contributed by hard
/// distractors when each hard token outweighs a weak one by `ratio_b_over_a`.
inline double hard_mass_share(double ratio_b_over_a, double p) {
  detail::check_proportion(p);
  if (!(ratio_b_over_a >= 0.0) || !std::isfinite(ratio_b_over_a)) {
    throw RangeError("ratio b/a must be finite and >= 0");
  }
  const double hard = p * ratio_b_over_a;
  const double total = hard + (1.0 - p);
  if (total == 0.0) throw DegenerateError("distractor mass is zero");
  return hard / total;
}

/// Curvature of the exact form once rewritten as A / (1 + kappa p):
/// kappa = (b - a) / (1 + a + c). Reduces to b/a - 1 when a, b >> 1.
inline double curvature(const MixtureCoefficients& k) { return k.gamma() / (1.0 + k.a + k.c); }

// Margins seen at temperature tau: logits are divided by tau, so are their
// differences.
inline LogitMargins scale_margins(const LogitMargins& m, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw RangeError("temperature must be > 0");
  LogitMargins out{m.delta_e / tau, m.delta_h / tau, std::nullopt};
  if (m.delta_o) out.delta_o = *m.delta_o / tau;
  return out;
}

inline std::vector<double> temperature_softmax(std::span<const double> logits, double tau) {
  if (logits.empty()) throw ArgumentError("softmax of an empty logit vector");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw RangeError("temperature must be > 0");
  double top = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw ArgumentError("non-finite logit");
    top = std::max(top, z);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - top) / tau);
    sum += out[i];
  }
  for (double& w : out) w /= sum;
  return out;
}

// One pre-softmax logit per context token, partitioned into category spans.
struct TokenSpanLogits {
  std::vector<double> logits;
  std::vector<Span> spans;
};

// Throws StructureError unless `spans` tile [0, length) exactly.
inline void validate_partition(const std::vector<Span>& spans, std::size_t length) {
  std::vector<Span> sorted = spans;
  std::sort(sorted.begin(), sorted.end(), [](const Span& x, const Span& y) { return x.start < y.start; });
  std::size_t cursor = 0;
  for (const Span& s : sorted) {
    if (s.end <= s.start) {
      throw StructureError("empty or inverted span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ")");
    }
    if (s.start != cursor) {
      throw StructureError(s.start < cursor ? "overlapping spans at token " + std::to_string(s.start)
                                            : "gap in span cover at token " + std::to_string(cursor));
    }
    cursor = s.end;
  }
  if (cursor != length) {
    throw StructureError("spans cover " + std::to_string(cursor) + " of " + std::to_string(length) + " tokens");
  }
}

/// Token-level softmax at temperature tau, summed per span category. This is
/// the brute-force reference for gold_attention.
inline std::map<Category, double> aggregate_attention_oracle(const TokenSpanLogits& tsl, double tau) {
  validate_partition(tsl.spans, tsl.logits.size());
  const auto weights = temperature_softmax(tsl.logits, tau);
  std::map<Category, double> out;
  for (const Span& s : tsl.spans) {
    double sum = 0.0;
    for (std::size_t j = s.start; j < s.end; ++j) sum += weights[j];
    out[s.category] += sum;
  }
  return out;
}

/// Builds the uniform-margin token layout the closed form assumes: gold tokens
/// at `gold_logit`, weak tokens at gold - delta_e, hard tokens at
/// gold - delta_h, other tokens at gold - delta_o. The hard token count is
/// round(hard_fraction * distractor_tokens).
inline TokenSpanLogits uniform_margin_logits(const LogitMargins& m, const CompositionCounts& counts,
                                             Category weak = Category::easy, double gold_logit = 0.0) {
  if (!is_weak(weak)) throw ArgumentError("weak category must be easy or random");
  if (counts.other_tokens > 0 && !m.delta_o) throw ArgumentError("other tokens need a delta_o margin");
  const auto hard = static_cast<std::size_t>(
      std::llround(counts.hard_fraction * static_cast<double>(counts.distractor_tokens)));
  const std::size_t weak_n = counts.distractor_tokens - hard;

  TokenSpanLogits out;
  auto append = [&](std::size_t n, double z, Category c) {
    if (n == 0) return;
    const std::size_t start = out.logits.size();
    out.logits.insert(out.logits.end(), n, z);
    out.spans.push_back({start, out.logits.size(), c});
  };
  append(counts.gold_tokens, gold_logit, Category::gold);
  append(weak_n, gold_logit - m.delta_e, weak);
  append(hard, gold_logit - m.delta_h, Category::hard);
  if (m.delta_o) append(counts.other_tokens, gold_logit - *m.delta_o, Category::other);
  return out;
}

struct CurvePoint {
  double p = 0.0;
  double alpha = 0.0;
};

struct AttentionCurve {
  std::vector<CurvePoint> points;
};

// Hard proportions used throughout the accuracy tables, in percent:
// 0 1 2 3 5 10 20 40 60 80 90 100.
inline std::vector<double> default_p_grid() {
  return {0.0, 0.01, 0.02, 0.03, 0.05, 0.10, 0.20, 0.40, 0.60, 0.80, 0.90, 1.00};
}

inline void validate_grid(std::span<const double> grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    detail::check_proportion(grid[i]);
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ArgumentError("p grid must be strictly increasing");
  }
}

inline AttentionCurve predicted_curve(const MixtureCoefficients& k, std::span<const double> grid) {
  validate_grid(grid);
  AttentionCurve curve;
  curve.points.reserve(grid.size());
  for (double p : grid) curve.points.push_back({p, gold_attention(k, p)});
  return curve;
}

}  // namespace inklab
