#pragma once

// Retrieval-head scoring and gold/distractor logit margins over exported
// pre-softmax attention logits.
//
// LogitDump file layout: one UTF-8 JSON header line terminated by '\n', then
// rows*cols little-endian IEEE-754 float32 values in row-major order.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "inklab/category.hpp"
#include "inklab/errors.hpp"
#include "inklab/metrics.hpp"
#include "inklab/random.hpp"

namespace inklab {

struct RowRange {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > start ? end - start : 0; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

struct LogitDump {
  std::string model_id;
  std::size_t layer = 0;
  std::size_t head = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  RowRange query_rows;
  std::vector<Span> spans;
  std::string sample_id;
  double hard_fraction = 0.0;
  std::vector<float> matrix;  // row-major, rows x cols

  float at(std::size_t r, std::size_t c) const { return matrix[r * cols + c]; }

  const Span& gold_span() const {
    for (const Span& s : spans) {
      if (s.category == Category::gold) return s;
    }
    throw ArgumentError("dump has no gold span");
  }

  friend bool operator==(const LogitDump&, const LogitDump&) = default;
};

struct HeadScore {
  std::size_t layer = 0;
  std::size_t head = 0;
  double score = 0.0;

  std::pair<std::size_t, std::size_t> key() const { return {layer, head}; }
  friend bool operator==(const HeadScore&, const HeadScore&) = default;
};

// ---------------------------------------------------------------------------
// Validation and file I/O

namespace detail {

// Returns an error message for the first violated header invariant.
inline std::optional<std::string> header_problem(const LogitDump& d) {
  if (d.rows == 0 || d.cols == 0) return "matrix must have nonzero rows and cols";
  if (d.query_rows.end <= d.query_rows.start || d.query_rows.end > d.rows) return "query_rows out of range";
  if (!(d.hard_fraction >= 0.0 && d.hard_fraction <= 1.0)) return "hard_fraction outside [0,1]";
  std::vector<Span> sorted = d.spans;
  std::sort(sorted.begin(), sorted.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  std::size_t gold = 0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Span& s = sorted[i];
    if (s.end <= s.start) return "empty span at column " + std::to_string(s.start);
    if (s.end > d.cols) return "span [" + std::to_string(s.start) + "," + std::to_string(s.end) + ") exceeds cols";
    if (i > 0 && s.start < sorted[i - 1].end) return "overlapping spans at column " + std::to_string(s.start);
    if (s.category == Category::gold) ++gold;
  }
  if (gold != 1) return "expected exactly one gold span, found " + std::to_string(gold);
  return std::nullopt;
}

inline std::uint32_t load_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline void store_le32(std::uint32_t v, unsigned char* p) {
  p[0] = static_cast<unsigned char>(v);
  p[1] = static_cast<unsigned char>(v >> 8);
  p[2] = static_cast<unsigned char>(v >> 16);
  p[3] = static_cast<unsigned char>(v >> 24);
}

}  // namespace detail

// Throws ArgumentError on any invariant violation (used before writing).
inline void validate_dump(const LogitDump& d) {
  if (auto problem = detail::header_problem(d)) throw ArgumentError("invalid dump: " + *problem);
  if (d.matrix.size() != d.rows * d.cols) throw ArgumentError("invalid dump: matrix size != rows*cols");
  for (float v : d.matrix) {
    if (!std::isfinite(v)) throw ArgumentError("invalid dump: non-finite logit");
  }
}

inline std::string dump_header_json(const LogitDump& d) {
  nlohmann::ordered_json h;
  h["model_id"] = d.model_id;
  h["layer"] = d.layer;
  h["head"] = d.head;
  h["rows"] = d.rows;
  h["cols"] = d.cols;
  h["query_rows"] = {d.query_rows.start, d.query_rows.end};
  auto spans = nlohmann::ordered_json::array();
  for (const Span& s : d.spans) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"category", std::string(to_string(s.category))}});
  }
  h["spans"] = std::move(spans);
  h["sample_id"] = d.sample_id;
  h["hard_fraction"] = d.hard_fraction;
  return h.dump();
}

inline void write_dump(std::ostream& out, const LogitDump& d) {
  validate_dump(d);
  const std::string header = dump_header_json(d);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.put('\n');
  std::vector<unsigned char> buf(d.matrix.size() * 4);
  for (std::size_t i = 0; i < d.matrix.size(); ++i) {
    detail::store_le32(std::bit_cast<std::uint32_t>(d.matrix[i]), buf.data() + 4 * i);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write_dump: stream write failed");
}

inline void write_dump(const std::filesystem::path& path, const LogitDump& d) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_dump(out, d);
}

/// Parses and validates one dump. Every defect raises FormatError carrying
/// the byte offset where it was detected: 0 for header-level problems, the
/// offset of the offending float for non-finite values, and the end of the
/// available data for truncated payloads.
inline LogitDump read_dump(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("missing header line", 0);
  if (in.eof()) throw FormatError("header line is not newline-terminated", header.size());
  const std::size_t payload_offset = header.size() + 1;

  LogitDump d;
  try {
    const auto h = nlohmann::json::parse(header);
    d.model_id = h.at("model_id").get<std::string>();
    d.layer = h.at("layer").get<std::size_t>();
    d.head = h.at("head").get<std::size_t>();
    d.rows = h.at("rows").get<std::size_t>();
    d.cols = h.at("cols").get<std::size_t>();
    const auto& q = h.at("query_rows");
    if (!q.is_array() || q.size() != 2) throw FormatError("query_rows must be [start, end)", 0);
    d.query_rows = {q[0].get<std::size_t>(), q[1].get<std::size_t>()};
    for (const auto& s : h.at("spans")) {
      const auto cat = try_parse_category(s.at("category").get<std::string>());
      if (!cat) throw FormatError("unknown span category '" + s.at("category").get<std::string>() + "'", 0);
      d.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(), *cat});
    }
    d.sample_id = h.at("sample_id").get<std::string>();
    d.hard_fraction = h.at("hard_fraction").get<double>();
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what(), 0);
  }
  if (auto problem = detail::header_problem(d)) throw FormatError(*problem, 0);

  const std::size_t count = d.rows * d.cols;
  std::vector<unsigned char> buf(count * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != buf.size()) {
    throw FormatError("truncated matrix payload: expected " + std::to_string(buf.size()) + " bytes, got " +
                          std::to_string(got),
                      payload_offset + got);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after matrix payload", payload_offset + buf.size());
  }
  d.matrix.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const float v = std::bit_cast<float>(detail::load_le32(buf.data() + 4 * i));
    if (!std::isfinite(v)) {
      throw FormatError("non-finite logit at row " + std::to_string(i / d.cols) + ", col " + std::to_string(i % d.cols),
                        payload_offset + 4 * i);
    }
    d.matrix[i] = v;
  }
  return d;
}

inline LogitDump load_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dump " + path.string());
  try {
    return read_dump(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.byte_offset());
  }
}

// All regular files in `dir` (sorted by name), parsed as dumps.
inline std::vector<LogitDump> load_dump_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LogitDump> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_dump(f));
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

/// Mean over `query_rows` of the mean logit on the gold-span columns.
inline double score_head(const LogitDump& d, RowRange query_rows) {
  if (query_rows.size() == 0) throw ArgumentError("score_head: empty query row range");
  if (query_rows.end > d.rows) throw ArgumentError("score_head: query rows exceed matrix rows");
  const Span& gold = d.gold_span();
  double total = 0.0;
  for (std::size_t r = query_rows.start; r < query_rows.end; ++r) {
    double row = 0.0;
    for (std::size_t c = gold.start; c < gold.end; ++c) row += d.at(r, c);
    total += row / static_cast<double>(gold.size());
  }
  return total / static_cast<double>(query_rows.size());
}

inline double score_head(const LogitDump& d) { return score_head(d, d.query_rows); }

// Per-(layer, head) scores averaged across all dumps (samples) given,
// ordered by (layer, head).
inline std::vector<HeadScore> average_head_scores(std::span<const LogitDump> dumps) {
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;
  for (const auto& d : dumps) {
    auto& [sum, n] = acc[{d.layer, d.head}];
    sum += score_head(d);
    ++n;
  }
  std::vector<HeadScore> out;
  out.reserve(acc.size());
  for (const auto& [key, v] : acc) out.push_back({key.first, key.second, v.first / static_cast<double>(v.second)});
  return out;
}

inline constexpr std::size_t kDefaultTopHeads = 16;

/// The k best heads, highest score first; equal scores go to the lower
/// (layer, head).
inline std::vector<HeadScore> select_heads(std::span<const HeadScore> scores, std::size_t k = kDefaultTopHeads) {
  if (k < 1 || k > scores.size()) {
    throw ArgumentError("select_heads: k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
  }
  std::vector<HeadScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const HeadScore& a, const HeadScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.key() < b.key();
  });
  sorted.resize(k);
  return sorted;
}

// ---------------------------------------------------------------------------
// Margins

struct MarginReport {
  std::optional<double> delta_e;  // absent when no weak span was seen
  double delta_h = 0.0;
  std::optional<double> gap;      // delta_e - delta_h
  std::map<Category, double> per_category;  // mean span logit per category
  std::size_t n_samples = 0;
};

/// Gold-over-distractor logit margins on the selected heads. For each dump of
/// a selected head: span means of the query-row-averaged logits, a margin per
/// distractor span (gold mean minus span mean), then the category mean of
/// those margins. Dump-level values are averaged across heads and samples.
/// Easy and random spans both count as the weak category.
inline MarginReport margins(std::span<const LogitDump> dumps, std::span<const HeadScore> heads) {
  std::set<std::pair<std::size_t, std::size_t>> wanted;
  for (const auto& h : heads) wanted.insert(h.key());
  if (wanted.empty()) throw ArgumentError("margins: no heads selected");

  std::set<std::pair<std::size_t, std::size_t>> covered;
  std::set<std::string> samples;
  double weak_sum = 0.0, hard_sum = 0.0;
  std::size_t weak_n = 0, hard_n = 0;
  std::map<Category, std::pair<double, std::size_t>> cat_acc;

  for (const auto& d : dumps) {
    if (!wanted.contains({d.layer, d.head})) continue;
    covered.insert({d.layer, d.head});
    samples.insert(d.sample_id);

    std::vector<double> colmean(d.cols, 0.0);
    for (std::size_t r = d.query_rows.start; r < d.query_rows.end; ++r) {
      for (std::size_t c = 0; c < d.cols; ++c) colmean[c] += d.at(r, c);
    }
    for (double& v : colmean) v /= static_cast<double>(d.query_rows.size());
    auto span_mean = [&](const Span& s) {
      double sum = 0.0;
      for (std::size_t c = s.start; c < s.end; ++c) sum += colmean[c];
      return sum / static_cast<double>(s.size());
    };

    const double gold = span_mean(d.gold_span());
    std::map<Category, std::pair<double, std::size_t>> span_means;
    double dw = 0.0, dh = 0.0;
    std::size_t nw = 0, nh = 0;
    for (const Span& s : d.spans) {
      const double m = span_mean(s);
      auto& [sum, n] = span_means[s.category];
      sum += m;
      ++n;
      if (is_weak(s.category)) {
        dw += gold - m;
        ++nw;
      } else if (s.category == Category::hard) {
        dh += gold - m;
        ++nh;
      }
    }
    for (const auto& [c, v] : span_means) {
      auto& [sum, n] = cat_acc[c];
      sum += v.first / static_cast<double>(v.second);
      ++n;
    }
    if (nw > 0) {
      weak_sum += dw / static_cast<double>(nw);
      ++weak_n;
    }
    if (nh > 0) {
      hard_sum += dh / static_cast<double>(nh);
      ++hard_n;
    }
  }

  for (const auto& key : wanted) {
    if (!covered.contains(key)) {
      throw CoverageError("no dump for selected head (layer " + std::to_string(key.first) + ", head " +
                          std::to_string(key.second) + ")");
    }
  }
  if (hard_n == 0) throw CoverageError("margins: no hard spans in dumps of the selected heads");

  MarginReport out;
  out.delta_h = hard_sum / static_cast<double>(hard_n);
  if (weak_n > 0) {
    out.delta_e = weak_sum / static_cast<double>(weak_n);
    out.gap = *out.delta_e - out.delta_h;
  }
  for (const auto& [c, v] : cat_acc) out.per_category[c] = v.first / static_cast<double>(v.second);
  out.n_samples = samples.size();
  return out;
}

// ---------------------------------------------------------------------------
// Stability of head selection

struct HeadStability {
  double pearson_topk = 0.0;
  double spearman_all = 0.0;
};

inline HeadStability head_stability(std::span<const HeadScore> train, std::span<const HeadScore> test,
                                    std::size_t k = kDefaultTopHeads) {
  std::map<std::pair<std::size_t, std::size_t>, double> test_by_key;
  for (const auto& h : test) {
    if (!test_by_key.emplace(h.key(), h.score).second) throw ArgumentError("head_stability: duplicate head in test");
  }
  if (train.size() != test_by_key.size()) throw ArgumentError("head_stability: train and test cover different heads");
  std::vector<double> xs, ys;
  for (const auto& h : train) {
    const auto it = test_by_key.find(h.key());
    if (it == test_by_key.end()) throw ArgumentError("head_stability: train and test cover different heads");
    xs.push_back(h.score);
    ys.push_back(it->second);
  }
  std::vector<double> top_x, top_y;
  for (const auto& h : select_heads(train, k)) {
    top_x.push_back(h.score);
    top_y.push_back(test_by_key.at(h.key()));
  }
  return {pearson(top_x, top_y), spearman(xs, ys)};
}

struct SampleSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline constexpr std::size_t kDefaultTrainSamples = 50;

// Seeded split of distinct sample ids into head-selection and measurement
// sets; independent of input order.
inline SampleSplit split_samples(std::vector<std::string> ids, std::size_t n_train, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (n_train == 0 || n_train >= ids.size()) {
    throw ArgumentError("split_samples: need 0 < n_train < " + std::to_string(ids.size()));
  }
  Rng rng(mix_seed(seed));
  shuffle_in_place(ids, rng);
  SampleSplit s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace inklab
