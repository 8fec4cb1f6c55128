#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "inklab/inklab.hpp"

namespace inklab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Option plumbing

// Values from a JSON config object fill options that were not given on the
// command line. Keys are long option names without the dashes; '_' and '-'
// are interchangeable.
void merge_config(CLI::App& cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file " + path + " must hold a JSON object");
  for (const auto& [raw_key, value] : j.items()) {
    std::string key = raw_key;
    std::replace(key.begin(), key.end(), '_', '-');
    CLI::Option* opt = key == "config" || key == "help" ? nullptr : cmd.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + raw_key + "' for " + cmd.get_name());
    if (opt->count() > 0) continue;
    auto text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) opt->add_result(text(v));
    } else {
      opt->add_result(text(value));
    }
    opt->run_callback();
  }
}

void need(const CLI::App& cmd, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    if (cmd.get_option(name)->count() == 0) throw UsageError(std::string(name) + " is required");
  }
}

void need_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' is not a readable file");
}

void need_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw UsageError(std::string(what) + " '" + path + "' is not a directory");
}

std::ofstream open_output(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  return out;
}

// Writes via `emit` to `path`, or to `fallback` when no path is set.
void emit_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& emit) {
  if (path.empty()) {
    emit(fallback);
    return;
  }
  auto f = open_output(path);
  emit(f);
  if (!f) throw Error("write to " + path + " failed");
}

std::size_t resolve_jobs(const CLI::Option* opt, std::size_t flag_value) {
  if (opt->count() > 0) {
    if (flag_value == 0) throw UsageError("--jobs must be >= 1");
    return flag_value;
  }
  if (const char* env = std::getenv("INKLAB_JOBS"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) throw UsageError(std::string("INKLAB_JOBS='") + env + "' is not a positive integer");
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs f(0..n-1) on up to `jobs` threads. Results are written by index, so
// callers see the same output regardless of scheduling; the error reported is
// the one with the lowest index.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& f) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(jobs, n);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// SVG

void write_curve_svg(std::ostream& out, const AttentionCurve& curve, const std::string& title) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  double lo = curve.points.front().alpha, hi = lo;
  for (const auto& pt : curve.points) {
    lo = std::min(lo, pt.alpha);
    hi = std::max(hi, pt.alpha);
  }
  if (hi - lo < 1e-300) hi = lo + 1.0;
  auto x = [&](double p) { return L + p * (W - L - R); };
  auto y = [&](double a) { return H - B - (a - lo) / (hi - lo) * (H - T - B); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    out << "<text x=\"" << x(p) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\" font-family=\"sans-serif\""
        << " font-size=\"11\">" << fixed(p, 2) << "</text>\n";
  }
  for (double a : {lo, (lo + hi) / 2, hi}) {
    out << "<text x=\"" << L - 6 << "\" y=\"" << y(a) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\""
        << " font-size=\"11\">" << format_double(std::stod(fixed(a, 4))) << "</text>\n";
  }
  out << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">hard proportion p</text>\n";
  out << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (const auto& pt : curve.points) out << fixed(x(pt.p), 2) << ',' << fixed(y(pt.alpha), 2) << ' ';
  out << "\"/>\n";
  for (const auto& pt : curve.points) {
    out << "<circle cx=\"" << fixed(x(pt.p), 2) << "\" cy=\"" << fixed(y(pt.alpha), 2)
        << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Commands

struct BuildArgs {
  std::string samples, pools, out = "contexts";
  std::vector<std::size_t> lengths{4096};
  std::vector<double> props = default_p_grid();
  std::vector<std::string> strategies{"easy"};
  std::uint64_t seed = 0;
  std::size_t jobs = 0, min_tokens = 100, max_tokens = 150, top_k = 200;
  double tolerance = 0.02;
};

struct LoadedPools {
  PassagePools shared;                                     // easy and random
  std::map<std::string, std::vector<Passage>> hard_by_sample;
  std::optional<Bm25Index> hard_index;                     // untagged hard passages
};

LoadedPools load_pools(const BuildArgs& a) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.pools)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  LoadedPools out;
  std::vector<Passage> untagged;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::vector<PoolEntry> entries;
    try {
      entries = read_pool_jsonl(in);
    } catch (const FormatError& e) {
      throw FormatError(f.string() + ": " + e.what(), e.byte_offset());
    }
    for (auto& e : entries) {
      if (e.passage.category == Category::gold) {
        throw FormatError(f.string() + ": passage " + e.passage.id + " is gold; pools hold distractors only", 0);
      }
      auto norm = normalize_passage(e.passage, a.min_tokens, a.max_tokens);
      if (!norm) continue;
      if (norm->category != Category::hard) {
        out.shared[norm->category].push_back(std::move(*norm));
      } else if (e.sample_id) {
        out.hard_by_sample[*e.sample_id].push_back(std::move(*norm));
      } else {
        untagged.push_back(std::move(*norm));
      }
    }
  }
  if (!untagged.empty()) out.hard_index.emplace(std::move(untagged));
  return out;
}

int cmd_build(const BuildArgs& a, const CLI::Option* jobs_opt, std::ostream& out) {
  need_file(a.samples, "--samples");
  need_dir(a.pools, "--pools");
  for (const auto& s : a.strategies) {
    if (s != "easy" && s != "random") throw UsageError("--strategy must be easy or random, got '" + s + "'");
  }
  if (a.lengths.empty() || a.props.empty()) throw UsageError("--lengths and --props must not be empty");
  const std::size_t jobs = resolve_jobs(jobs_opt, a.jobs);

  const auto samples = read_samples_jsonl(fs::path(a.samples));
  const LoadedPools loaded = load_pools(a);

  std::vector<PassagePools> per_sample(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    PassagePools pools = loaded.shared;
    auto& hard = pools[Category::hard];
    if (auto it = loaded.hard_by_sample.find(samples[i].id); it != loaded.hard_by_sample.end()) hard = it->second;
    if (loaded.hard_index && !bm25_terms(samples[i].question).empty()) {
      for (auto& s : loaded.hard_index->rank(samples[i].question, a.top_k)) hard.push_back(std::move(s.passage));
    }
    if (hard.empty()) pools.erase(Category::hard);
    per_sample[i] = std::move(pools);
  });

  BuildOptions opt;
  opt.tolerance = a.tolerance;
  fs::create_directories(a.out);
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-6s %-8s %8s %8s %8s %10s\n", "T", "p", "strategy", "samples", "hard",
                "weak", "tokens");
  out << line;
  for (std::size_t target : a.lengths) {
    for (double p : a.props) {
      for (const auto& strategy : a.strategies) {
        const MixSpec spec{target, p, parse_category(strategy), a.seed};
        std::vector<BuiltContext> built(samples.size());
        parallel_for(samples.size(), jobs, [&](std::size_t i) {
          try {
            built[i] = build_context(samples[i], per_sample[i], spec, opt);
          } catch (const CapacityError& e) {
            throw CapacityError("sample " + samples[i].id + ": " + e.what());
          }
        });
        const fs::path file = fs::path(a.out) / ("ctx_T" + std::to_string(target) + "_p" + format_double(p) + "_" +
                                                 strategy + ".jsonl");
        auto f = open_output(file, true);
        write_built_contexts_jsonl(f, built);
        if (!f) throw Error("write to " + file.string() + " failed");

        double hard = 0, weak = 0, tokens = 0;
        for (const auto& c : built) {
          hard += static_cast<double>(c.composition.hard_count);
          weak += static_cast<double>(c.composition.weak_count);
          tokens += static_cast<double>(c.composition.total_tokens);
        }
        const double n = std::max<double>(1.0, static_cast<double>(built.size()));
        std::snprintf(line, sizeof line, "%-8zu %-6s %-8s %8zu %8.1f %8.1f %10.1f\n", target, format_double(p).c_str(),
                      strategy.c_str(), built.size(), hard / n, weak / n, tokens / n);
        out << line;
      }
    }
  }
  return kOk;
}

struct SimulateArgs {
  double delta_e = 0, delta_h = 0, delta_o = 0, tau = 1.0;
  std::size_t td = 100, to = 0;
  std::vector<double> grid = default_p_grid();
  std::string out, svg;
};

int cmd_simulate(const SimulateArgs& a, const CLI::App& cmd, std::ostream& out) {
  need(cmd, {"--delta-e", "--delta-h"});
  std::optional<double> delta_o;
  if (cmd.get_option("--delta-o")->count() > 0) delta_o = a.delta_o;
  const auto margins = scale_margins(LogitMargins::make(a.delta_e, a.delta_h, delta_o), a.tau);
  const auto k = coefficients(margins, CompositionCounts::make(1, a.td, a.to, 0.0));
  const auto curve = predicted_curve(k, a.grid);

  const double a0 = gold_attention(k, 0.0), a10 = gold_attention(k, 0.1), a100 = gold_attention(k, 1.0);
  if (a.out.empty()) {
    write_curve_csv(out, curve);
  } else {
    emit_to(a.out, out, [&](std::ostream& o) { write_curve_csv(o, curve); });
  }
  if (!a.svg.empty()) {
    emit_to(a.svg, out, [&](std::ostream& o) {
      write_curve_svg(o, curve, "gold attention, delta_e=" + format_double(a.delta_e) +
                                    " delta_h=" + format_double(a.delta_h) + " T_d=" + std::to_string(a.td));
    });
  }
  out << "# alpha(0)=" << format_double(a0) << " alpha(0.1)=" << format_double(a10)
      << " alpha(1)=" << format_double(a100) << '\n';
  out << "# drop at p=0.1: " << fixed(100.0 * (a0 - a10) / a0, 2) << "%\n";
  try {
    out << "# drop ratio: " << fixed(drop_ratio_from(a0, a10, a100).value, 6) << '\n';
  } catch (const DegenerateError&) {
    out << "# drop ratio: undefined (flat curve)\n";
  }
  return kOk;
}

int cmd_fit(const std::string& csv, const std::string& report, std::ostream& out) {
  need_file(csv, "--csv");
  const auto points = read_accuracy_csv(fs::path(csv));
  const auto fit = fit_curve(points);
  const auto j = fit_report_json(fit);
  if (!report.empty()) emit_to(report, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  out << "kappa: " << format_double(fit.kappa) << '\n';
  out << "r2: " << format_double(fit.r2) << '\n';
  out << "predicted drop ratio: "
      << (j["predicted_drop_ratio"].is_null() ? std::string("undefined")
                                              : fixed(j["predicted_drop_ratio"].get<double>(), 6))
      << '\n';
  return kOk;
}

int cmd_heads(const std::string& dir, std::size_t top, const std::string& path, std::ostream& out) {
  need_dir(dir, "--dumps");
  const auto dumps = load_dump_dir(dir);
  if (dumps.empty()) throw UsageError("no dump files in " + dir);
  const auto scores = average_head_scores(dumps);
  const auto best = select_heads(scores, top);
  emit_to(path, out, [&](std::ostream& o) { write_head_scores_csv(o, best); });
  return kOk;
}

struct MarginsArgs {
  std::string dumps, out;
  std::size_t top = kDefaultTopHeads, train = kDefaultTrainSamples;
  std::uint64_t seed = 0;
};

int cmd_margins(const MarginsArgs& a, std::ostream& out) {
  need_dir(a.dumps, "--dumps");
  const auto dumps = load_dump_dir(a.dumps);
  std::vector<std::string> ids;
  for (const auto& d : dumps) ids.push_back(d.sample_id);
  const auto split = split_samples(ids, a.train, a.seed);
  const std::set<std::string> train_ids(split.train.begin(), split.train.end());
  std::vector<LogitDump> train, test;
  for (const auto& d : dumps) (train_ids.contains(d.sample_id) ? train : test).push_back(d);

  const auto train_scores = average_head_scores(train);
  const auto test_scores = average_head_scores(test);
  const auto heads = select_heads(train_scores, std::min(a.top, train_scores.size()));
  const auto m = margins(test, heads);

  ordered_json j;
  j["n_train_samples"] = split.train.size();
  j["n_test_samples"] = split.test.size();
  j["heads"] = ordered_json::array();
  for (const auto& h : heads) j["heads"].push_back({{"layer", h.layer}, {"head", h.head}, {"score", h.score}});
  j["delta_e"] = m.delta_e ? ordered_json(*m.delta_e) : ordered_json(nullptr);
  j["delta_h"] = m.delta_h;
  j["gap"] = m.gap ? ordered_json(*m.gap) : ordered_json(nullptr);
  j["per_category"] = ordered_json::object();
  for (const auto& [c, v] : m.per_category) j["per_category"][std::string(to_string(c))] = v;
  try {
    const auto st = head_stability(train_scores, test_scores, heads.size());
    j["stability"] = {{"pearson_topk", st.pearson_topk}, {"spearman_all", st.spearman_all}};
  } catch (const DegenerateError&) {
    j["stability"] = nullptr;
  } catch (const ArgumentError&) {
    j["stability"] = nullptr;
  }
  emit_to(a.out, out, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
  return kOk;
}

struct ScheduleArgs {
  std::string kind = "filter_hard", out;
  double ratio = 0.0;
  std::vector<std::size_t> lengths = default_schedule_lengths();
};

int cmd_schedule(const ScheduleArgs& a, const CLI::App& cmd, std::ostream& out) {
  std::vector<FilterScheduleRow> rows;
  if (a.kind == "filter_hard") {
    rows = filter_schedule(FilterKind::filter_hard);
  } else if (a.kind == "filter_random") {
    rows = filter_schedule(FilterKind::filter_random);
  } else {
    need(cmd, {"--ratio"});
    rows = proportional_schedule(a.ratio, a.lengths);
  }
  emit_to(a.out, out, [&](std::ostream& o) { write_schedule_csv(o, rows); });
  return kOk;
}

int cmd_drop_ratio(const std::string& csv, std::ostream& out) {
  need_file(csv, "--csv");
  const auto points = read_accuracy_csv(fs::path(csv));
  out << fixed(drop_ratio(points).value, 3) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string samples, out;
  std::vector<std::string> predictions;
  std::vector<double> props;
};

int cmd_eval(const EvalArgs& a, const CLI::App& cmd, std::ostream& out) {
  need(cmd, {"--samples", "--predictions", "--props"});
  need_file(a.samples, "--samples");
  for (const auto& p : a.predictions) need_file(p, "--predictions");
  if (a.predictions.size() != a.props.size()) {
    throw UsageError("--predictions and --props must have the same number of entries");
  }
  std::map<std::string, std::vector<std::string>> answers;
  for (const auto& s : read_samples_jsonl(fs::path(a.samples))) answers[s.id] = s.answers;

  std::vector<AccuracyPoint> points;
  for (std::size_t i = 0; i < a.predictions.size(); ++i) {
    std::ifstream in(a.predictions[i]);
    const auto preds = read_predictions_jsonl(in);
    if (preds.empty()) throw CoverageError(a.predictions[i] + " holds no predictions");
    std::set<std::string> seen;
    std::vector<std::string> outputs;
    std::vector<std::vector<std::string>> refs;
    for (const auto& p : preds) {
      if (!seen.insert(p.sample_id).second) throw FormatError(a.predictions[i] + ": duplicate sample " + p.sample_id, 0);
      const auto it = answers.find(p.sample_id);
      if (it == answers.end()) throw CoverageError(a.predictions[i] + ": unknown sample " + p.sample_id);
      outputs.push_back(p.output);
      refs.push_back(it->second);
    }
    points.push_back(AccuracyPoint::make(a.props[i], substring_accuracy(outputs, refs), outputs.size()));
  }
  std::sort(points.begin(), points.end(), [](const auto& x, const auto& y) { return x.p < y.p; });
  emit_to(a.out, out, [&](std::ostream& o) { write_accuracy_csv(o, points); });
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"inklab: distractor-mixture experiments for long-context QA"};
  app.name("inklab");
  app.require_subcommand(1);
  app.fallthrough(false);

  std::map<CLI::App*, std::function<int()>> handlers;
  std::map<CLI::App*, std::string> configs;
  auto command = [&](const std::string& name, const std::string& desc) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", configs[sub], "JSON file of option values; command-line flags take precedence");
    return sub;
  };

  BuildArgs build;
  CLI::App* b = command("build", "Assemble mixed-distractor contexts over a length x proportion grid");
  b->add_option("--samples", build.samples, "QA samples (JSONL)");
  b->add_option("--pools", build.pools, "Directory of passage pool files (*.jsonl)");
  b->add_option("--lengths", build.lengths, "Target context lengths in tokens")->delimiter(',')->capture_default_str();
  b->add_option("--props", build.props, "Hard proportions p")->delimiter(',');
  b->add_option("--strategy", build.strategies, "Weak category: easy, random")->delimiter(',')->capture_default_str();
  b->add_option("--seed", build.seed, "Base seed")->capture_default_str();
  b->add_option("--out", build.out, "Output directory")->capture_default_str();
  CLI::Option* build_jobs = b->add_option("--jobs", build.jobs, "Worker threads (env INKLAB_JOBS; default all cores)");
  b->add_option("--min-tokens", build.min_tokens, "Passage length floor after normalization")->capture_default_str();
  b->add_option("--max-tokens", build.max_tokens, "Passage length cap")->capture_default_str();
  b->add_option("--top-k", build.top_k, "BM25 hard candidates per question")->capture_default_str();
  b->add_option("--tolerance", build.tolerance, "Allowed relative deviation from target length")
      ->capture_default_str();
  handlers[b] = [&] { return cmd_build(build, build_jobs, out); };

  SimulateArgs sim;
  CLI::App* s = command("simulate", "Evaluate gold attention over p for given logit margins");
  s->add_option("--delta-e", sim.delta_e, "Gold minus weak-distractor logit");
  s->add_option("--delta-h", sim.delta_h, "Gold minus hard-distractor logit");
  s->add_option("--delta-o", sim.delta_o, "Gold minus other-token logit");
  s->add_option("--td", sim.td, "Distractor count")->capture_default_str();
  s->add_option("--to", sim.to, "Other-token count")->capture_default_str();
  s->add_option("--tau", sim.tau, "Softmax temperature")->capture_default_str();
  s->add_option("--grid", sim.grid, "p grid")->delimiter(',');
  s->add_option("--out", sim.out, "Curve CSV path (default: stdout)");
  s->add_option("--svg", sim.svg, "Optional SVG chart path");
  handlers[s] = [&] { return cmd_simulate(sim, *s, out); };

  std::string fit_csv, fit_out;
  CLI::App* f = command("fit", "Fit c0 + c1/(1 + kappa p) to an accuracy curve");
  f->add_option("--csv", fit_csv, "Accuracy CSV (p,accuracy[,n])");
  f->add_option("--out", fit_out, "Fit report JSON path");
  handlers[f] = [&] {
    need(*f, {"--csv"});
    return cmd_fit(fit_csv, fit_out, out);
  };

  std::string heads_dir, heads_out;
  std::size_t heads_top = kDefaultTopHeads;
  CLI::App* h = command("heads", "Rank attention heads by mean gold-span logit");
  h->add_option("--dumps", heads_dir, "Directory of logit dumps");
  h->add_option("--top", heads_top, "Number of heads")->capture_default_str();
  h->add_option("--out", heads_out, "CSV path (default: stdout)");
  handlers[h] = [&] {
    need(*h, {"--dumps"});
    return cmd_heads(heads_dir, heads_top, heads_out, out);
  };

  MarginsArgs marg;
  CLI::App* m = command("margins", "Measure gold/distractor logit margins on held-out samples");
  m->add_option("--dumps", marg.dumps, "Directory of logit dumps");
  m->add_option("--top", marg.top, "Heads selected on the training split")->capture_default_str();
  m->add_option("--train", marg.train, "Samples used for head selection")->capture_default_str();
  m->add_option("--seed", marg.seed, "Split seed")->capture_default_str();
  m->add_option("--out", marg.out, "JSON path (default: stdout)");
  handlers[m] = [&] {
    need(*m, {"--dumps"});
    return cmd_margins(marg, out);
  };

  ScheduleArgs sched;
  CLI::App* sc = command("schedule", "Emit a context-length schedule");
  sc->add_option("--kind", sched.kind, "filter_hard, filter_random or proportional")
      ->check(CLI::IsMember({"filter_hard", "filter_random", "proportional"}))
      ->capture_default_str();
  sc->add_option("--ratio", sched.ratio, "Hard share for the proportional schedule");
  sc->add_option("--lengths", sched.lengths, "Context lengths for the proportional schedule")->delimiter(',');
  sc->add_option("--out", sched.out, "CSV path (default: stdout)");
  handlers[sc] = [&] { return cmd_schedule(sched, *sc, out); };

  std::string dr_csv;
  CLI::App* d = command("drop-ratio", "(A(0) - A(0.1)) / (A(0) - A(1)) from an accuracy CSV");
  d->add_option("--csv", dr_csv, "Accuracy CSV");
  handlers[d] = [&] {
    need(*d, {"--csv"});
    return cmd_drop_ratio(dr_csv, out);
  };

  EvalArgs ev;
  CLI::App* e = command("eval", "Substring-match accuracy of predictions, one file per p");
  e->add_option("--samples", ev.samples, "QA samples (JSONL)");
  e->add_option("--predictions", ev.predictions, "Prediction files (JSONL)")->delimiter(',');
  e->add_option("--props", ev.props, "Hard proportion of each prediction file")->delimiter(',');
  e->add_option("--out", ev.out, "Accuracy CSV path (default: stdout)");
  handlers[e] = [&] { return cmd_eval(ev, *e, out); };

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    if (const auto& cfg = configs[chosen]; !cfg.empty()) merge_config(*chosen, cfg);
    return handlers.at(chosen)();
  } catch (const CLI::Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const ArgumentError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsageError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace inklab::cli
