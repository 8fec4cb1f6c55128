#pragma once

// Text file formats: JSON Lines for passages, samples, built contexts and
// predictions; CSV for accuracy curves, attention curves and schedules.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "inklab/attention_model.hpp"
#include "inklab/context_builder.hpp"
#include "inklab/errors.hpp"
#include "inklab/head_analysis.hpp"
#include "inklab/metrics.hpp"

namespace inklab {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// ---------------------------------------------------------------------------
// JSON Lines

namespace detail {

template <typename F>
void for_each_jsonl(std::istream& in, const std::string& what, F&& f) {
  std::string line;
  std::size_t offset = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what + " line " + std::to_string(lineno) + ": " + e.what(), here);
    } catch (const ArgumentError& e) {
      throw FormatError(what + " line " + std::to_string(lineno) + ": " + e.what(), here);
    }
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace detail

inline Passage passage_from_json(const nlohmann::json& j, const TokenCounter& counter = whitespace_token_count) {
  return Passage::make(j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                       parse_category(j.at("category").get<std::string>()), counter, j.value("source", std::string()));
}

inline nlohmann::ordered_json passage_to_json(const Passage& p) {
  return {{"id", p.id}, {"text", p.text}, {"category", std::string(to_string(p.category))}, {"source", p.source}};
}

// A pool entry plus the optional sample it was retrieved for.
struct PoolEntry {
  Passage passage;
  std::optional<std::string> sample_id;
};

inline std::vector<PoolEntry> read_pool_jsonl(std::istream& in, const TokenCounter& counter = whitespace_token_count) {
  std::vector<PoolEntry> out;
  detail::for_each_jsonl(in, "pool", [&](const nlohmann::json& j) {
    PoolEntry e{passage_from_json(j, counter), std::nullopt};
    if (j.contains("sample_id")) e.sample_id = j.at("sample_id").get<std::string>();
    out.push_back(std::move(e));
  });
  return out;
}

inline std::vector<QASample> read_samples_jsonl(std::istream& in, const TokenCounter& counter = whitespace_token_count) {
  std::vector<QASample> out;
  detail::for_each_jsonl(in, "samples", [&](const nlohmann::json& j) {
    nlohmann::json gold = j.at("gold");
    if (!gold.contains("category")) gold["category"] = "gold";
    out.push_back(QASample::make(j.at("id").get<std::string>(), j.at("question").get<std::string>(),
                                 j.at("answers").get<std::vector<std::string>>(), passage_from_json(gold, counter)));
  });
  return out;
}

inline std::vector<QASample> read_samples_jsonl(const std::filesystem::path& path,
                                                const TokenCounter& counter = whitespace_token_count) {
  auto in = detail::open_input(path);
  return read_samples_jsonl(in, counter);
}

inline nlohmann::ordered_json built_context_to_json(const BuiltContext& c) {
  nlohmann::ordered_json spec = {{"target_tokens", c.spec.target_tokens},
                                 {"hard_fraction", c.spec.hard_fraction},
                                 {"weak_category", std::string(to_string(c.spec.weak_category))},
                                 {"seed", c.spec.seed}};
  nlohmann::ordered_json comp = {{"hard_count", c.composition.hard_count},   {"weak_count", c.composition.weak_count},
                                 {"hard_tokens", c.composition.hard_tokens}, {"weak_tokens", c.composition.weak_tokens},
                                 {"gold_tokens", c.composition.gold_tokens}, {"total_tokens", c.composition.total_tokens}};
  return {{"sample_id", c.sample_id}, {"spec", spec}, {"order", c.order}, {"composition", comp}, {"text", c.text}};
}

inline BuiltContext built_context_from_json(const nlohmann::json& j) {
  BuiltContext c;
  c.sample_id = j.at("sample_id").get<std::string>();
  const auto& s = j.at("spec");
  c.spec.target_tokens = s.at("target_tokens").get<std::size_t>();
  c.spec.hard_fraction = s.at("hard_fraction").get<double>();
  c.spec.weak_category = parse_category(s.at("weak_category").get<std::string>());
  c.spec.seed = s.at("seed").get<std::uint64_t>();
  c.order = j.at("order").get<std::vector<std::string>>();
  const auto& m = j.at("composition");
  c.composition = {m.at("hard_count").get<std::size_t>(),  m.at("weak_count").get<std::size_t>(),
                   m.at("hard_tokens").get<std::size_t>(), m.at("weak_tokens").get<std::size_t>(),
                   m.at("gold_tokens").get<std::size_t>(), m.at("total_tokens").get<std::size_t>()};
  c.text = j.at("text").get<std::string>();
  return c;
}

inline void write_built_contexts_jsonl(std::ostream& out, const std::vector<BuiltContext>& contexts) {
  for (const auto& c : contexts) out << built_context_to_json(c).dump() << '\n';
}

inline std::vector<BuiltContext> read_built_contexts_jsonl(std::istream& in) {
  std::vector<BuiltContext> out;
  detail::for_each_jsonl(in, "contexts", [&](const nlohmann::json& j) { out.push_back(built_context_from_json(j)); });
  return out;
}

struct Prediction {
  std::string sample_id;
  std::string output;
  std::string model_id;
};

inline std::vector<Prediction> read_predictions_jsonl(std::istream& in) {
  std::vector<Prediction> out;
  detail::for_each_jsonl(in, "predictions", [&](const nlohmann::json& j) {
    out.push_back({j.at("sample_id").get<std::string>(), j.at("output").get<std::string>(),
                   j.value("model_id", std::string())});
  });
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    const auto b = c.find_first_not_of(" \t");
    const auto e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

namespace detail {

inline double parse_number(const std::string& cell, std::size_t lineno, std::size_t offset) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw FormatError("line " + std::to_string(lineno) + ": '" + cell + "' is not a number", offset);
  }
}

}  // namespace detail

/// Reads an accuracy curve with header `p,accuracy,n` (columns may appear in
/// any order; `n` is optional and defaults to 1).
inline std::vector<AccuracyPoint> read_accuracy_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty accuracy CSV", 0);
  std::size_t offset = line.size() + 1;
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto cp = col("p"), ca = col("accuracy"), cn = col("n");
  if (!cp || !ca) throw FormatError("accuracy CSV header must contain p and accuracy", 0);

  std::vector<AccuracyPoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t here = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " cells", here);
    }
    const double p = detail::parse_number(cells[*cp], lineno, here);
    const double a = detail::parse_number(cells[*ca], lineno, here);
    const double n = cn ? detail::parse_number(cells[*cn], lineno, here) : 1.0;
    try {
      out.push_back(AccuracyPoint::make(p, a, static_cast<std::size_t>(n)));
    } catch (const ArgumentError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what(), here);
    }
  }
  return out;
}

inline std::vector<AccuracyPoint> read_accuracy_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return read_accuracy_csv(in);
}

inline void write_accuracy_csv(std::ostream& out, const std::vector<AccuracyPoint>& points) {
  out << "p,accuracy,n\n";
  for (const auto& pt : points) out << format_double(pt.p) << ',' << format_double(pt.accuracy) << ',' << pt.n << '\n';
}

inline void write_curve_csv(std::ostream& out, const AttentionCurve& curve) {
  out << "p,alpha\n";
  for (const auto& pt : curve.points) out << format_double(pt.p) << ',' << format_double(pt.alpha) << '\n';
}

inline void write_schedule_csv(std::ostream& out, const std::vector<FilterScheduleRow>& rows) {
  out << "context_tokens,hard_pct,weak_pct\n";
  for (const auto& r : rows) out << r.context_tokens << ',' << format_double(r.hard_pct) << ',' << format_double(r.weak_pct) << '\n';
}

inline void write_head_scores_csv(std::ostream& out, const std::vector<HeadScore>& scores) {
  out << "layer,head,score\n";
  for (const auto& h : scores) out << h.layer << ',' << h.head << ',' << format_double(h.score) << '\n';
}

// {c0, c1, kappa, sse, r2, predicted_drop_ratio}; the last is null when the
// fitted curve is flat.
inline nlohmann::ordered_json fit_report_json(const FitResult& fit) {
  nlohmann::ordered_json j = {{"c0", fit.c0}, {"c1", fit.c1}, {"kappa", fit.kappa}, {"sse", fit.sse}, {"r2", fit.r2}};
  try {
    j["predicted_drop_ratio"] = predicted_drop_ratio(fit);
  } catch (const Error&) {
    j["predicted_drop_ratio"] = nullptr;
  }
  return j;
}

}  // namespace inklab
