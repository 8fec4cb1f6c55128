#pragma once

// Fixed-length evaluation contexts: one gold passage mixed with hard and weak
// distractors at a controlled hard proportion, plus the context-reduction
// schedules used by the filtering experiments.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "inklab/category.hpp"
#include "inklab/errors.hpp"
#include "inklab/metrics.hpp"
#include "inklab/random.hpp"

namespace inklab {

// Counts tokens in a piece of text. Must be deterministic and monotone under
// prefix extension (a prefix never has more tokens than the whole).
using TokenCounter = std::function<std::size_t(std::string_view)>;

inline bool is_space(char ch) { return std::isspace(static_cast<unsigned char>(ch)) != 0; }

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

inline std::size_t whitespace_token_count(std::string_view text) { return split_whitespace(text).size(); }

inline std::size_t tokenize_count(std::string_view text, const TokenCounter& counter = whitespace_token_count) {
  return counter(text);
}

struct Passage {
  std::string id;
  std::string text;
  Category category = Category::random;
  std::size_t token_count = 0;
  std::string source;

  static Passage make(std::string id, std::string text, Category category,
                      const TokenCounter& counter = whitespace_token_count, std::string source = {}) {
    if (category == Category::other) throw ArgumentError("passage '" + id + "' cannot have category 'other'");
    if (text.empty()) throw ArgumentError("passage '" + id + "' has empty text");
    const std::size_t n = counter(text);
    return Passage{std::move(id), std::move(text), category, n, std::move(source)};
  }

  friend bool operator==(const Passage&, const Passage&) = default;
};

struct QASample {
  std::string id;
  std::string question;
  std::vector<std::string> answers;
  Passage gold;

  static QASample make(std::string id, std::string question, std::vector<std::string> answers, Passage gold) {
    if (answers.empty()) throw ArgumentError("sample '" + id + "' has no answers");
    if (gold.category != Category::gold) throw ArgumentError("sample '" + id + "' gold passage is not category gold");
    return QASample{std::move(id), std::move(question), std::move(answers), std::move(gold)};
  }
};

struct MixSpec {
  std::size_t target_tokens = 0;
  double hard_fraction = 0.0;
  Category weak_category = Category::easy;
  std::uint64_t seed = 0;
};

struct Composition {
  std::size_t hard_count = 0;
  std::size_t weak_count = 0;
  std::size_t hard_tokens = 0;
  std::size_t weak_tokens = 0;
  std::size_t gold_tokens = 0;
  std::size_t total_tokens = 0;

  friend bool operator==(const Composition&, const Composition&) = default;
};

struct BuiltContext {
  std::string sample_id;
  MixSpec spec;
  std::vector<std::string> order;
  std::string text;
  Composition composition;
};

// ---------------------------------------------------------------------------
// Passage shaping

inline constexpr std::array<std::string_view, 3> kFillerSentences = {
    "The grass is green.", "The sky is blue.", "The sun is yellow."};

// Repeats the three filler sentences in order while the next one still fits
// within `budget_tokens`.
inline Passage easy_filler(std::size_t budget_tokens, const TokenCounter& counter = whitespace_token_count,
                           std::string id = {}) {
  std::string text;
  for (std::size_t i = 0;; ++i) {
    const std::string_view next = kFillerSentences[i % kFillerSentences.size()];
    std::string candidate = text.empty() ? std::string(next) : text + " " + std::string(next);
    if (counter(candidate) > budget_tokens) break;
    text = std::move(candidate);
  }
  if (text.empty()) {
    throw ArgumentError("filler budget " + std::to_string(budget_tokens) + " is smaller than one sentence");
  }
  if (id.empty()) id = "easy-filler-" + std::to_string(budget_tokens);
  return Passage::make(std::move(id), std::move(text), Category::easy, counter, "filler");
}

// Sentence chunks, each keeping its trailing punctuation. Boundaries are
// '.', '!' or '?' (plus closing quotes/brackets) followed by whitespace.
inline std::vector<std::string_view> split_sentences(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size() && is_space(text[start])) ++start;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char ch = text[i];
    if (ch != '.' && ch != '!' && ch != '?') continue;
    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '"' || text[end] == '\'' || text[end] == ')' || text[end] == ']')) ++end;
    if (end < text.size() && !is_space(text[end])) continue;
    out.push_back(text.substr(start, end - start));
    start = end;
    while (start < text.size() && is_space(text[start])) ++start;
    i = start == 0 ? 0 : start - 1;
  }
  if (start < text.size()) out.push_back(text.substr(start));
  return out;
}

inline constexpr std::size_t kDefaultDiscardFloor = 50;

/// Brings a passage into the [min_tokens, max_tokens] band used for all
/// distractor categories. Long passages are cut at the last sentence boundary
/// that fits; if that would leave fewer than min_tokens, the cut falls back to
/// a whitespace-token boundary. Passages shorter than `discard_floor` come
/// back as nullopt. Anything else passes through unchanged.
inline std::optional<Passage> normalize_passage(const Passage& p, std::size_t min_tokens, std::size_t max_tokens,
                                                std::size_t discard_floor = kDefaultDiscardFloor,
                                                const TokenCounter& counter = whitespace_token_count) {
  if (min_tokens > max_tokens) throw ArgumentError("normalize_passage: min_tokens > max_tokens");
  if (discard_floor > max_tokens) throw ArgumentError("normalize_passage: discard floor above max_tokens");
  const std::size_t n = counter(p.text);
  if (n < discard_floor) return std::nullopt;
  if (n <= max_tokens) {
    Passage same = p;
    same.token_count = n;
    return same;
  }

  std::string kept;
  for (std::string_view s : split_sentences(p.text)) {
    std::string candidate = kept.empty() ? std::string(s) : kept + " " + std::string(s);
    if (counter(candidate) > max_tokens) break;
    kept = std::move(candidate);
  }
  if (kept.empty() || counter(kept) < min_tokens) {
    // Largest whitespace-word prefix within budget; binary search relies on
    // the counter being monotone in prefix length.
    const auto words = split_whitespace(p.text);
    auto prefix = [&](std::size_t k) {
      if (k == 0) return std::string();
      const char* first = words.front().data();
      const char* last = words[k - 1].data() + words[k - 1].size();
      return std::string(first, static_cast<std::size_t>(last - first));
    };
    std::size_t lo = 0, hi = words.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi + 1) / 2;
      if (counter(prefix(mid)) <= max_tokens) lo = mid;
      else hi = mid - 1;
    }
    kept = prefix(lo);
  }
  Passage out = p;
  out.text = std::move(kept);
  out.token_count = counter(out.text);
  if (out.text.empty() || out.token_count < discard_floor) return std::nullopt;
  return out;
}

// String-level answer leak check. Paraphrased answers slip through; semantic
// verification is done upstream.
inline bool contains_answer(std::string_view text, std::span<const std::string> answers) {
  return std::any_of(answers.begin(), answers.end(), [&](const std::string& a) { return contains_ci(text, a); });
}

// ---------------------------------------------------------------------------
// BM25

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Lowercased alphanumeric runs.
inline std::vector<std::string> bm25_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string cur;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc) || uc >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      terms.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) terms.push_back(std::move(cur));
  return terms;
}

struct ScoredPassage {
  Passage passage;
  double score = 0.0;
};

// Inverted index over a fixed corpus. Uses the non-negative idf
// ln(1 + (N - df + 0.5) / (df + 0.5)) so that terms present in most
// documents still score above zero.
class Bm25Index {
 public:
  explicit Bm25Index(std::vector<Passage> corpus, Bm25Params params = {})
      : corpus_(std::move(corpus)), params_(params) {
    if (corpus_.empty()) throw ArgumentError("bm25: empty corpus");
    doc_len_.reserve(corpus_.size());
    double total = 0.0;
    for (std::size_t d = 0; d < corpus_.size(); ++d) {
      const auto terms = bm25_terms(corpus_[d].text);
      doc_len_.push_back(static_cast<double>(terms.size()));
      total += static_cast<double>(terms.size());
      std::unordered_map<std::string, std::uint32_t> tf;
      for (const auto& t : terms) ++tf[t];
      for (auto& [t, f] : tf) postings_[t].push_back({d, f});
    }
    avgdl_ = total / static_cast<double>(corpus_.size());
    if (avgdl_ <= 0.0) avgdl_ = 1.0;
  }

  const std::vector<Passage>& corpus() const { return corpus_; }

  double idf(const std::string& term) const {
    const auto it = postings_.find(term);
    const double df = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
    const double n = static_cast<double>(corpus_.size());
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  // Scores for every document, in corpus order.
  std::vector<double> scores(std::string_view query) const {
    auto terms = bm25_terms(query);
    if (terms.empty()) throw ArgumentError("bm25: query has no terms after tokenization");
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    std::vector<double> out(corpus_.size(), 0.0);
    for (const auto& t : terms) {
      const auto it = postings_.find(t);
      if (it == postings_.end()) continue;
      const double w = idf(t);
      for (const auto& [doc, f] : it->second) {
        const double tf = static_cast<double>(f);
        const double norm = params_.k1 * (1.0 - params_.b + params_.b * doc_len_[doc] / avgdl_);
        out[doc] += w * tf * (params_.k1 + 1.0) / (tf + norm);
      }
    }
    return out;
  }

  // Top-k by score, ties by passage id ascending.
  std::vector<ScoredPassage> rank(std::string_view query, std::size_t top_k) const {
    if (top_k < 1) throw ArgumentError("bm25: top_k must be >= 1");
    const auto s = scores(query);
    std::vector<std::size_t> idx(corpus_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const std::size_t k = std::min(top_k, idx.size());
    auto better = [&](std::size_t x, std::size_t y) {
      if (s[x] != s[y]) return s[x] > s[y];
      return corpus_[x].id < corpus_[y].id;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
    std::vector<ScoredPassage> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({corpus_[idx[i]], s[idx[i]]});
    return out;
  }

 private:
  struct Posting {
    std::size_t doc;
    std::uint32_t tf;
  };
  std::vector<Passage> corpus_;
  Bm25Params params_;
  std::vector<double> doc_len_;
  double avgdl_ = 1.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

inline std::vector<ScoredPassage> bm25_rank(std::string_view query, std::span<const Passage> corpus,
                                            std::size_t top_k, Bm25Params params = {}) {
  return Bm25Index(std::vector<Passage>(corpus.begin(), corpus.end()), params).rank(query, top_k);
}

// ---------------------------------------------------------------------------
// Context assembly

using PassagePools = std::map<Category, std::vector<Passage>>;

// Hard slots among n distractor slots: round(p n), but at least one whenever
// p > 0 so small grids (1% at 4K) stay distinct from p = 0.
inline std::size_t hard_slot_count(double p, std::size_t n) {
  if (!(p >= 0.0 && p <= 1.0)) throw RangeError("hard fraction outside [0,1]");
  if (p == 0.0 || n == 0) return 0;
  const auto r = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  return std::clamp<std::size_t>(r, 1, n);
}

struct BuildOptions {
  TokenCounter counter = whitespace_token_count;
  double tolerance = 0.02;
  // Size of synthesized easy filler passages when the easy pool is empty.
  std::size_t filler_budget = 150;
  std::string separator = "\n\n";
};

/// Assembles one context for `sample`. The distractor slot count N is the one
/// whose token total lands closest to spec.target_tokens; hard_slot_count(p, N)
/// slots come from the hard pool and the rest from spec.weak_category. If that
/// total is still outside the tolerance, chosen passages are swapped for
/// unused ones of the same category until it fits. Hard
/// passages that leak an answer string, and any pool entry sharing the gold id,
/// are skipped. Pools are sampled without replacement; the gold passage is
/// shuffled in with the distractors. The random stream depends only on
/// spec.seed and sample.id, so the result is a pure function of the inputs.
/// When the easy pool is empty, easy slots are filled with synthesized filler.
inline BuiltContext build_context(const QASample& sample, const PassagePools& pools, const MixSpec& spec,
                                  const BuildOptions& opt = {}) {
  if (!is_weak(spec.weak_category)) throw ArgumentError("weak category must be easy or random");
  if (!(spec.hard_fraction >= 0.0 && spec.hard_fraction <= 1.0)) throw RangeError("hard fraction outside [0,1]");
  const std::size_t gold_tokens = sample.gold.token_count;
  if (spec.target_tokens <= gold_tokens) {
    throw ArgumentError("target_tokens " + std::to_string(spec.target_tokens) + " leaves no room beyond the gold passage");
  }

  Rng rng(mix_seed(spec.seed ^ fnv1a(sample.id)));

  auto candidates = [&](Category c) {
    std::vector<const Passage*> out;
    const auto it = pools.find(c);
    if (it == pools.end()) return out;
    for (const Passage& p : it->second) {
      if (p.id == sample.gold.id) continue;
      if (c == Category::hard && contains_answer(p.text, sample.answers)) continue;
      out.push_back(&p);
    }
    // Canonical order first so the draw does not depend on pool file order.
    std::sort(out.begin(), out.end(), [](const Passage* x, const Passage* y) { return x->id < y->id; });
    shuffle_in_place(out, rng);
    return out;
  };
  const auto hard = candidates(Category::hard);
  const auto weak = candidates(spec.weak_category);
  const bool synth_filler = spec.weak_category == Category::easy && weak.empty();

  if (spec.hard_fraction > 0.0 && hard.empty()) {
    throw CapacityError("hard pool is empty for sample '" + sample.id + "' but hard fraction is " +
                        std::to_string(spec.hard_fraction));
  }

  std::vector<Passage> fillers;  // only grows; pointers are taken after the last growth
  auto weak_at = [&](std::size_t i) -> const Passage& {
    if (!synth_filler) return *weak[i];
    while (fillers.size() <= i) {
      fillers.push_back(easy_filler(opt.filler_budget, opt.counter, "easy-filler-" + std::to_string(fillers.size())));
    }
    return fillers[i];
  };

  // Prefix sums: N slots always means the first h hard and first N-h weak
  // candidates, so totals grow by one passage per step.
  std::vector<std::size_t> hard_prefix{0}, weak_prefix{0};
  auto total_for = [&](std::size_t n) -> std::optional<std::size_t> {
    const std::size_t h = hard_slot_count(spec.hard_fraction, n);
    const std::size_t w = n - h;
    if (h > hard.size()) return std::nullopt;
    if (!synth_filler && w > weak.size()) return std::nullopt;
    while (hard_prefix.size() <= h) hard_prefix.push_back(hard_prefix.back() + hard[hard_prefix.size() - 1]->token_count);
    while (weak_prefix.size() <= w) weak_prefix.push_back(weak_prefix.back() + weak_at(weak_prefix.size() - 1).token_count);
    return gold_tokens + hard_prefix[h] + weak_prefix[w];
  };

  const std::string_view weak_name = to_string(spec.weak_category);
  auto exhausted = [&](std::size_t slots, std::size_t have) {
    const bool hard_short = hard_slot_count(spec.hard_fraction, slots) > hard.size();
    return CapacityError(std::string(hard_short ? "hard" : weak_name) + " pool exhausted for sample '" + sample.id +
                         "' after " + std::to_string(slots - 1) + " distractors (" + std::to_string(have) + " of " +
                         std::to_string(spec.target_tokens) + " tokens)");
  };

  const std::size_t min_slots = spec.hard_fraction > 0.0 ? 1 : 0;
  std::size_t n = min_slots;
  auto first = total_for(n);
  if (!first) throw exhausted(n, gold_tokens);
  std::size_t total = *first;
  while (total < spec.target_tokens) {
    auto t = total_for(n + 1);
    if (!t) throw exhausted(n + 1, total);
    ++n;
    total = *t;
  }
  if (n > min_slots) {
    const std::size_t below = *total_for(n - 1);
    const auto target = static_cast<double>(spec.target_tokens);
    if (std::fabs(static_cast<double>(below) - target) < std::fabs(static_cast<double>(total) - target)) {
      --n;
      total = below;
    }
  }
  const std::size_t h = hard_slot_count(spec.hard_fraction, n);
  const std::size_t w = n - h;
  std::vector<const Passage*> hard_sel(hard.begin(), hard.begin() + static_cast<std::ptrdiff_t>(h));
  std::vector<const Passage*> hard_rest(hard.begin() + static_cast<std::ptrdiff_t>(h), hard.end());
  std::vector<const Passage*> weak_sel, weak_rest;
  for (std::size_t i = 0; i < w; ++i) weak_sel.push_back(&weak_at(i));
  if (!synth_filler) weak_rest.assign(weak.begin() + static_cast<std::ptrdiff_t>(w), weak.end());

  // Passage lengths are coarse next to a tight tolerance on short targets.
  // Close the gap by swapping a chosen passage for an unused one of the same
  // category; first best swap wins, so the result stays deterministic.
  const auto target = static_cast<double>(spec.target_tokens);
  auto miss = [&](std::size_t t) { return std::fabs(static_cast<double>(t) - target); };
  for (int round = 0; round < 16 && miss(total) > opt.tolerance * target; ++round) {
    std::vector<const Passage*>* best_sel = nullptr;
    std::vector<const Passage*>* best_rest = nullptr;
    std::size_t best_i = 0, best_j = 0, best_total = total;
    for (auto [sel, rest] : {std::pair{&hard_sel, &hard_rest}, std::pair{&weak_sel, &weak_rest}}) {
      for (std::size_t i = 0; i < sel->size(); ++i) {
        for (std::size_t j = 0; j < rest->size(); ++j) {
          const std::size_t t = total - (*sel)[i]->token_count + (*rest)[j]->token_count;
          if (miss(t) < miss(best_total)) {
            best_sel = sel;
            best_rest = rest;
            best_i = i;
            best_j = j;
            best_total = t;
          }
        }
      }
    }
    if (best_sel == nullptr) break;
    std::swap((*best_sel)[best_i], (*best_rest)[best_j]);
    total = best_total;
  }
  if (miss(total) > opt.tolerance * target) {
    throw CapacityError("cannot reach " + std::to_string(spec.target_tokens) + " tokens within tolerance for sample '" +
                        sample.id + "' (closest total " + std::to_string(total) + ")");
  }

  std::vector<const Passage*> chosen;
  chosen.reserve(n + 1);
  chosen.push_back(&sample.gold);
  chosen.insert(chosen.end(), hard_sel.begin(), hard_sel.end());
  chosen.insert(chosen.end(), weak_sel.begin(), weak_sel.end());
  shuffle_in_place(chosen, rng);

  BuiltContext out;
  out.sample_id = sample.id;
  out.spec = spec;
  out.composition.hard_count = h;
  out.composition.weak_count = w;
  for (const Passage* p : hard_sel) out.composition.hard_tokens += p->token_count;
  for (const Passage* p : weak_sel) out.composition.weak_tokens += p->token_count;
  out.composition.gold_tokens = gold_tokens;
  out.composition.total_tokens = total;
  for (const Passage* p : chosen) {
    if (!out.text.empty()) out.text += opt.separator;
    out.text += p->text;
    out.order.push_back(p->id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Filtering schedules

struct FilterScheduleRow {
  std::size_t context_tokens = 0;
  double hard_pct = 0.0;
  double weak_pct = 0.0;

  friend bool operator==(const FilterScheduleRow&, const FilterScheduleRow&) = default;
};

enum class FilterKind { filter_hard, filter_random };

/// Context-reduction steps for the filtering comparison. filter_hard removes
/// hard distractors from an 80/20 start; filter_random mirrors it.
inline std::vector<FilterScheduleRow> filter_schedule(FilterKind kind) {
  static constexpr struct {
    std::size_t tokens;
    double hard;
  } kRows[] = {{131000, 80}, {110000, 76}, {89000, 71}, {69000, 62}, {47000, 44}, {27000, 3}};
  std::vector<FilterScheduleRow> out;
  for (const auto& r : kRows) {
    const double hard = kind == FilterKind::filter_hard ? r.hard : 100.0 - r.hard;
    out.push_back({r.tokens, hard, 100.0 - hard});
  }
  return out;
}

inline std::vector<std::size_t> default_schedule_lengths() {
  return {131000, 110000, 89000, 69000, 47000, 27000};
}

// Shrinks the context while holding the hard share fixed.
inline std::vector<FilterScheduleRow> proportional_schedule(double hard_ratio, std::span<const std::size_t> lengths) {
  if (!(hard_ratio >= 0.0 && hard_ratio <= 1.0)) throw RangeError("hard ratio outside [0,1]");
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (!(lengths[i] < lengths[i - 1])) throw ArgumentError("schedule lengths must be strictly decreasing");
  }
  std::vector<FilterScheduleRow> out;
  for (std::size_t len : lengths) out.push_back({len, 100.0 * hard_ratio, 100.0 * (1.0 - hard_ratio)});
  return out;
}

struct TokenRemoval {
  double hard_tokens = 0.0;
  double weak_tokens = 0.0;
};

// Distractor tokens removed per category between two consecutive rows.
// Gold and instruction tokens are ignored (they are not removed).
inline TokenRemoval removed_tokens(const FilterScheduleRow& from, const FilterScheduleRow& to) {
  const auto f = static_cast<double>(from.context_tokens);
  const auto t = static_cast<double>(to.context_tokens);
  return {f * from.hard_pct / 100.0 - t * to.hard_pct / 100.0, f * from.weak_pct / 100.0 - t * to.weak_pct / 100.0};
}

}  // namespace inklab
