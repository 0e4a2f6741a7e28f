#include "sfmaxent/cli_runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "sfmaxent/data_ingest.hpp"
#include "sfmaxent/errors.hpp"
#include "sfmaxent/stats_validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfmaxent {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "inf" || t == "infinity") return kUnbounded;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  return v;
}

std::uint64_t parse_count(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec == std::errc() && end == t.data() + t.size() && !t.empty()) return v;
  // Accept integral values written in exponent form, e.g. 1e9.
  const double d = parse_double(key, t);
  if (d < 0.0 || d != std::floor(d) || d > 1.8e19) {
    throw ConfigError(fmt::format("{}: '{}' is not a nonnegative integer", key, text));
  }
  return static_cast<std::uint64_t>(d);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

void write_text(const fs::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::string two_column_csv(std::string_view a, std::string_view b, std::span<const double> xs,
                           std::span<const double> ys) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "{},{}\n", a, b);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g}\n", xs[i], ys[i]);
  }
  return fmt::to_string(buf);
}

std::string histogram_csv(const Histogram& h) {
  std::vector<double> centers(h.n_bins());
  for (std::size_t i = 0; i < h.n_bins(); ++i) centers[i] = h.center(i);
  return two_column_csv("u", "density", centers, h.density);
}

std::string rank_csv(const RankSize& rs) {
  std::vector<double> ranks(rs.ranks.begin(), rs.ranks.end());
  return two_column_csv("rank", "size", ranks, rs.sizes);
}

// null when the statistic cannot be computed for this input.
template <class F>
json try_stat(F&& f) {
  try {
    return f();
  } catch (const std::exception&) {
    return nullptr;
  }
}

template <class F>
json stat_or_unavailable(F&& f) {
  try {
    return f();
  } catch (const std::exception&) {
    return "unavailable";
  }
}

void dump_manifest(const json& manifest, const fs::path& out_dir) {
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

KeyValues simulation_defaults(std::string_view mode, std::uint64_t seed) {
  KeyValues d{{"n_walkers", "10000"}, {"x_init", "100"}, {"K", "10"},        {"dt", "1e-05"},
              {"noise", "wiener"},    {"seed", std::to_string(seed)},         {"threads", "1"},
              {"hist_bins", "0"}};
  if (mode == "free") {
    d.insert({{"drift", "0"}, {"n_steps", "30000"}, {"snapshot_every", "10000"}});
  } else if (mode == "bounded") {
    d.insert({{"drift", "auto"}, {"x0", "1"}, {"x_max", "10000"}, {"n_steps", "300000"},
              {"snapshot_every", "50000"}});
  } else if (mode == "zipf") {
    d.erase("x_init");  // derived from x0 and mean_u_target unless given
    d.insert({{"x0", "1"},
              {"mean_u_target", "1"},
              {"rebalance_every", "10000"},
              {"shared_k", "true"},
              {"n_steps", "1000000000"},
              {"snapshot_every", "100000000"}});
  } else {
    throw ConfigError(fmt::format("unknown simulate mode '{}' (free, bounded or zipf)", mode));
  }
  return d;
}

}  // namespace

// --- config ------------------------------------------------------------------

KeyValues parse_config(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("line {}: empty key", line_no));
    if (!kv.emplace(key, trim(std::string_view(t).substr(eq + 1))).second) {
      throw ConfigError(fmt::format("line {}: duplicate key '{}'", line_no, key));
    }
  }
  return kv;
}

KeyValues load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  return parse_config(in);
}

// --- simulate ----------------------------------------------------------------

SimulationPlan plan_simulation(std::string_view mode, const KeyValues& settings, std::uint64_t default_seed) {
  SimulationPlan plan;
  plan.mode = std::string(mode);
  KeyValues kv = simulation_defaults(mode, default_seed);
  for (const auto& [key, value] : settings) {
    // x_init is derived in zipf mode but may be given explicitly.
    if (!kv.count(key) && !(mode == "zipf" && key == "x_init")) {
      throw ConfigError(fmt::format("unknown key '{}' for simulate {}", key, mode));
    }
    kv[key] = value;
  }

  SimConfig& cfg = plan.config;
  cfg.n_walkers = parse_count("n_walkers", kv.at("n_walkers"));
  cfg.K = parse_double("K", kv.at("K"));
  cfg.dt = parse_double("dt", kv.at("dt"));
  cfg.seed = parse_count("seed", kv.at("seed"));
  cfg.threads = static_cast<unsigned>(std::max<std::uint64_t>(1, parse_count("threads", kv.at("threads"))));
  const std::string noise = kv.at("noise");
  if (noise == "wiener") {
    cfg.noise = NoiseConvention::wiener;
  } else if (noise == "variance") {
    cfg.noise = NoiseConvention::variance;
  } else {
    throw ConfigError("noise must be wiener or variance");
  }
  plan.n_steps = parse_count("n_steps", kv.at("n_steps"));
  plan.snapshot_every = parse_count("snapshot_every", kv.at("snapshot_every"));
  plan.hist_bins = parse_count("hist_bins", kv.at("hist_bins"));

  if (mode == "bounded") {
    cfg.bounds = Bounds{parse_double("x0", kv.at("x0")), parse_double("x_max", kv.at("x_max"))};
  }
  if (mode == "zipf") {
    ExchangeSettings ex;
    ex.x0 = parse_double("x0", kv.at("x0"));
    ex.mean_u_target = parse_double("mean_u_target", kv.at("mean_u_target"));
    ex.rebalance_every = parse_count("rebalance_every", kv.at("rebalance_every"));
    ex.shared_k = parse_bool("shared_k", kv.at("shared_k"));
    cfg.exchange = ex;
    if (!kv.count("x_init")) kv["x_init"] = num(ex.x0 * std::exp(ex.mean_u_target));
  } else {
    const std::string drift = kv.at("drift");
    cfg.drift = drift == "auto" ? 0.0 : parse_double("drift", drift);
  }
  cfg.x_init = parse_double("x_init", kv.at("x_init"));
  if (mode != "zipf" && kv.at("drift") == "auto") cfg.drift = cfg.log_neutral_drift();

  cfg.validate();
  if (plan.n_steps < 1) throw ConfigError("n_steps must be at least 1");
  plan.resolved = std::move(kv);
  return plan;
}

json cmd_simulate(const SimulationPlan& plan, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const SimConfig& cfg = plan.config;
  const auto result = run_experiment(cfg, plan.n_steps, plan.snapshot_every);
  const auto& diag = result.diagnostics;
  const double x0 = cfg.reference_x0();
  std::vector<std::string> outputs;

  fmt::memory_buffer snap;
  fmt::format_to(std::back_inserter(snap), "step,walker_id,x\n");
  for (const auto& s : result.snapshots) {
    for (std::size_t w = 0; w < s.positions.size(); ++w) {
      fmt::format_to(std::back_inserter(snap), "{},{},{:.17g}\n", s.step_count, w, s.positions[w]);
    }
  }
  write_text(out_dir / "snapshots.csv", fmt::to_string(snap));
  outputs.push_back("snapshots.csv");

  // Model the ensemble should relax to, when the mode has one.
  std::optional<EquilibriumModel> target;
  if (cfg.bounds) target = EquilibriumModel::benford(std::log(cfg.bounds->x_max / x0), x0);
  if (cfg.exchange) target = EquilibriumModel::power_law(1.0 / cfg.exchange->mean_u_target, x0);

  json per_snapshot = json::array();
  std::string final_hist;
  for (const auto& s : result.snapshots) {
    const auto u = to_u(s.positions, x0);
    json row;
    row["step"] = s.step_count;
    row["mean_u"] = mean(u);
    row["var_u"] = variance(u);
    const auto fit = lognormal_fit(s.positions, x0);
    row["lognormal_fit"] = {{"mean_u", fit.mean_u}, {"sd_u", fit.sd_u}};
    row["jarque_bera_p"] = try_stat([&] { return json(jarque_bera(u).p_value); });
    const auto rs = rank_size(s.positions);
    row["rank_slope"] = try_stat([&] { return json(rank_loglog_slope(rs).slope); });
    if (target) row["ks_model"] = ks_distance(s.positions, *target);
    if (cfg.exchange) {
      row["density_slope"] = try_stat([&] { return json(density_loglog_slope(s.positions, x0, 40).slope); });
    }
    per_snapshot.push_back(row);

    const Histogram h = u_histogram(u, plan.hist_bins);
    const std::string csv = histogram_csv(h);
    const std::string name = fmt::format("u_hist_step{}.csv", s.step_count);
    write_text(out_dir / name, csv);
    outputs.push_back(name);
    final_hist = csv;
  }

  const auto& last = result.snapshots.back();
  const auto rs = rank_size(last.positions);
  const std::string ranks = rank_csv(rs);
  write_text(out_dir / "rank_size.csv", ranks);
  outputs.push_back("rank_size.csv");

  json summary;
  if (plan.mode == "free") {
    write_text(out_dir / "fig1_top_hist.csv", final_hist);
    outputs.push_back("fig1_top_hist.csv");
    const auto fit = lognormal_fit(last.positions, x0);
    summary["lognormal_fit"] = {{"mean_u", fit.mean_u}, {"sd_u", fit.sd_u}};
    summary["jarque_bera_p"] = per_snapshot.back()["jarque_bera_p"];
  } else if (plan.mode == "bounded") {
    write_text(out_dir / "fig2_rank.csv", ranks);
    outputs.push_back("fig2_rank.csv");
    summary["ks_benford"] = ks_distance(last.positions, *target);
    summary["fit_correlation_benford"] = try_stat(
        [&] { return json(fit_correlation(rs, *target, static_cast<double>(last.positions.size()))); });
    summary["mean_u"] = per_snapshot.back()["mean_u"];
  } else {
    write_text(out_dir / "fig3_rank.csv", ranks);
    outputs.push_back("fig3_rank.csv");
    summary["ks_power_law"] = ks_distance(last.positions, *target);
    summary["rank_slope"] = per_snapshot.back()["rank_slope"];
    summary["density_slope"] = per_snapshot.back()["density_slope"];
    summary["mean_u"] = per_snapshot.back()["mean_u"];
  }

  json d;
  d["proposals"] = diag.proposals;
  d["redraws"] = diag.redraws;
  d["rejections"] = diag.rejections;
  d["rebalances"] = diag.rebalances;
  d["converged_step"] = result.converged_step ? json(*result.converged_step) : json(nullptr);
  d["drift_per_step"] = cfg.drift;
  d["k_stddev"] = cfg.k_stddev();
  if (cfg.exchange) {
    d["iterations"] = diag.iterations;
    d["sum_u_initial"] = diag.sum_u_initial;
    d["sum_u_final"] = last.sum_u(x0);
    d["max_abs_sum_u_drift"] = diag.max_abs_sum_u_drift;
    d["conservation_bound"] = diag.conservation_bound();
    d["bound_violations"] = diag.bound_violations;
  }
  d["snapshots"] = per_snapshot;
  d["summary"] = summary;

  json manifest;
  manifest["command"] = "simulate";
  manifest["mode"] = plan.mode;
  manifest["config"] = plan.resolved;
  manifest["seed"] = cfg.seed;
  manifest["tool_version"] = std::string(kToolVersion);
  manifest["outputs"] = outputs;
  manifest["diagnostics"] = d;
  dump_manifest(manifest, out_dir);
  return manifest;
}

// --- solve -------------------------------------------------------------------

json cmd_solve(const SolveOptions& opts) {
  ConstraintSet c;
  c.normalized = opts.normalized;
  c.mean_u_target = opts.mean_u;
  c.u_max = opts.u_max.value_or(kUnbounded);
  c.validate();
  if (!(opts.x0 > 0.0)) throw ConfigError("x0 must be positive");
  const Multipliers m = solve_multipliers(c);
  json j = EquilibriumModel::from_multipliers(m, c, opts.x0);
  j["residuals"] = {{"normalization", m.normalization_residual}, {"mean_u", m.mean_residual}};
  return j;
}

// --- analyze -----------------------------------------------------------------

namespace {

SnapshotSeries subset(const SnapshotSeries& series, const std::vector<int>& years,
                      const std::optional<std::set<std::string>>& ids) {
  SnapshotSeries out(years);
  for (const auto& place : series.places()) {
    if (ids && !ids->count(place.id)) continue;
    bool added = false;
    for (int y : years) {
      if (const auto p = series.population(place.id, y)) {
        if (!added) {
          out.add_place(place);
          added = true;
        }
        out.set_population(place.id, y, *p);
      }
    }
  }
  return out;
}

// Place ids of the n largest entries, ties by place order.
std::set<std::string> top_ids(const SnapshotSeries& series, int year, std::size_t n) {
  auto entries = series.entries(year);
  if (entries.size() < n) throw std::invalid_argument("fewer places than top-n");
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.insert(entries[i].first);
  return ids;
}

RankSize head(const RankSize& rs, std::size_t n) {
  if (rs.sizes.size() < n) throw std::invalid_argument("fewer places than top-n");
  RankSize out;
  out.ranks.assign(rs.ranks.begin(), rs.ranks.begin() + static_cast<std::ptrdiff_t>(n));
  out.sizes.assign(rs.sizes.begin(), rs.sizes.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

json fit_against(const std::string& spec, const RankSize& rs, std::span<const double> values, std::size_t top_n,
                 FitSpace space) {
  const double n_all = static_cast<double>(rs.sizes.size());
  if (spec == "benford") {
    const double lo = rs.sizes.back();
    const double hi = rs.sizes.front();
    if (!(hi > lo)) throw std::invalid_argument("benford fit needs a size range");
    return fit_correlation(rs, EquilibriumModel::benford(std::log(hi / lo), lo), n_all, space);
  }
  if (spec == "lognormal") {
    const auto fit = lognormal_fit(values);
    return fit_correlation(rs, EquilibriumModel::log_normal(fit.mean_u, fit.sd_u * fit.sd_u), n_all, space);
  }
  if (spec == "zipf" || spec.rfind("power_law:", 0) == 0) {
    const RankSize top = head(rs, top_n);
    const double x0 = top.sizes.back();
    const auto model = spec == "zipf" ? EquilibriumModel::zipf(x0)
                                      : EquilibriumModel::power_law(parse_double("model", spec.substr(10)), x0);
    return fit_correlation(top, model, static_cast<double>(top_n), space);
  }
  // Anything else is a model JSON file, e.g. the output of `solve`.
  std::ifstream in(spec);
  if (!in) throw ConfigError("unknown model '" + spec + "'");
  return fit_correlation(rs, model_from_json(json::parse(in)), n_all, space);
}

void validate_model_spec(const std::string& spec) {
  if (spec == "benford" || spec == "lognormal" || spec == "zipf") return;
  if (spec.rfind("power_law:", 0) == 0) {
    parse_double("model", spec.substr(10));
    return;
  }
  std::ifstream in(spec);
  if (!in) throw ConfigError("unknown model '" + spec + "' (benford, lognormal, zipf, power_law:<lambda> or a JSON file)");
  try {
    model_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw ConfigError("model file " + spec + ": " + e.what());
  }
}

SnapshotSeries load_series(const AnalyzeOptions& opts, std::istream& stdin_stream) {
  std::ifstream file;
  std::istream* in = &stdin_stream;
  if (opts.data != "-") {
    if (opts.schema) {
      return parse_population_csv(opts.data, ColumnSchema::from_config(load_config(*opts.schema)));
    }
    file.open(opts.data);
    if (!file) throw IoError("cannot read " + opts.data.string());
    in = &file;
  } else if (opts.schema) {
    return parse_population_csv(stdin_stream, ColumnSchema::from_config(load_config(*opts.schema)));
  }
  if (in->peek() == std::char_traits<char>::eof()) throw ParseError("empty input");
  std::string header;
  const auto pos = in->tellg();
  std::getline(*in, header);
  if (trim(header) != kLongCsvHeader) {
    throw ConfigError("no --schema given and the header is not '" + std::string(kLongCsvHeader) + "'");
  }
  if (pos != std::streampos(-1)) {
    in->clear();
    in->seekg(pos);
    return parse_long_csv(*in);
  }
  std::stringstream rest;
  rest << header << '\n' << in->rdbuf();
  return parse_long_csv(rest);
}

}  // namespace

json cmd_analyze(const AnalyzeOptions& opts, std::istream& stdin_stream, const std::optional<fs::path>& out_dir) {
  for (const auto& m : opts.models) validate_model_spec(m);
  if (opts.top_n < 1) throw ConfigError("top-n must be at least 1");
  const SnapshotSeries raw = load_series(opts, stdin_stream);

  std::vector<int> years = opts.years.empty() ? raw.years() : opts.years;
  std::sort(years.begin(), years.end());
  for (int y : years) {
    if (!raw.has_year(y)) throw ConfigError(fmt::format("year {} is not in the data", y));
  }
  std::optional<std::set<std::string>> ids;
  if (opts.include) {
    std::ifstream in(*opts.include);
    if (!in) throw IoError("cannot read " + opts.include->string());
    ids.emplace();
    std::string line;
    while (std::getline(in, line)) {
      if (auto t = trim(line); !t.empty() && t[0] != '#') ids->insert(t);
    }
  }
  const SnapshotSeries series = subset(raw, years, ids);
  const FitSpace space = opts.linear_fit_space ? FitSpace::linear_size : FitSpace::log_size;
  if (out_dir) ensure_dir(*out_dir);

  json report;
  report["command"] = "analyze";
  report["years"] = years;
  report["top_n"] = opts.top_n;
  report["fit_space"] = opts.linear_fit_space ? "linear" : "log";
  report["models"] = opts.models;
  std::vector<std::string> outputs;

  json n_places, lognormal, ranks, fits, sums;
  for (int y : years) {
    const std::string key = std::to_string(y);
    const auto values = series.values(y);
    n_places[key] = values.size();
    lognormal[key] = stat_or_unavailable([&] {
      const auto fit = lognormal_fit(values);
      return json{{"mean_u", fit.mean_u}, {"sd_u", fit.sd_u}};
    });

    json rank_entry;
    rank_entry["file"] = nullptr;
    if (values.empty()) {
      rank_entry["slope_all"] = rank_entry["slope_top_n"] = "unavailable";
      ranks[key] = rank_entry;
      json f;
      for (const auto& m : opts.models) f[m] = "unavailable";
      fits[key] = f;
      sums[key] = "unavailable";
      continue;
    }
    const RankSize rs = rank_size(values);
    if (out_dir) {
      const std::string name = fmt::format("rank_size_{}.csv", y);
      write_text(*out_dir / name, rank_csv(rs));
      rank_entry["file"] = name;
      outputs.push_back(name);
    }
    rank_entry["slope_all"] = stat_or_unavailable([&] { return json(rank_loglog_slope(rs).slope); });
    rank_entry["slope_top_n"] = stat_or_unavailable([&] {
      if (rs.sizes.size() < opts.top_n) throw std::invalid_argument("short");
      return json(rank_loglog_slope(rs, opts.top_n).slope);
    });
    ranks[key] = rank_entry;

    json f;
    for (const auto& m : opts.models) {
      f[m] = stat_or_unavailable([&] { return fit_against(m, rs, values, opts.top_n, space); });
    }
    fits[key] = f;
    sums[key] = stat_or_unavailable([&] { return json(conservation_sum(rs.sizes, opts.top_n)); });
  }
  report["n_places"] = n_places;
  report["lognormal_fit"] = lognormal;
  report["rank_size"] = ranks;
  report["fit_correlation"] = fits;
  report["conservation_sum"] = sums;
  // N <u> with the Zipf-regime <u> = 1.
  report["conservation_prediction"] = opts.top_n;

  json growth;
  json pairs = json::object();
  json turnover = json::object();
  if (years.size() < 2) {
    growth["pairs"] = "unavailable";
    growth["pooled"] = "unavailable";
    report["regime_turnover"] = "unavailable";
  } else {
    for (std::size_t a = 0; a + 1 < years.size(); ++a) {
      const int t1 = years[a], t2 = years[a + 1];
      pairs[fmt::format("{}-{}", t1, t2)] = stat_or_unavailable([&] {
        const auto rec = growth_records(series, t1, t2);
        return json{{"correlation_u_udot", correlation_u_udot(rec)}, {"n", rec.size()}};
      });
    }
    growth["pairs"] = pairs;
    growth["pooled"] = stat_or_unavailable([&] {
      const auto rec = pooled_growth_records(series);
      return json{{"correlation_u_udot", correlation_u_udot(rec)}, {"n", rec.size()}};
    });
    for (std::size_t a = 0; a < years.size(); ++a) {
      for (std::size_t b = a + 1; b < years.size(); ++b) {
        turnover[fmt::format("{}-{}", years[a], years[b])] = stat_or_unavailable([&] {
          const auto t = regime_turnover(top_ids(series, years[a], opts.top_n), top_ids(series, years[b], opts.top_n));
          return json{{"count_exited", t.count_exited}, {"fraction", t.fraction}};
        });
      }
    }
    report["regime_turnover"] = turnover;
  }
  report["growth"] = growth;

  if (out_dir) {
    write_text(*out_dir / "report.json", report.dump(2) + "\n");
    outputs.push_back("report.json");
    json manifest;
    manifest["command"] = "analyze";
    manifest["config"] = {{"data", opts.data.string()},
                          {"schema", opts.schema ? json(opts.schema->string()) : json(nullptr)},
                          {"include", opts.include ? json(opts.include->string()) : json(nullptr)},
                          {"models", opts.models},
                          {"top_n", opts.top_n},
                          {"years", years},
                          {"fit_space", report["fit_space"]}};
    manifest["tool_version"] = std::string(kToolVersion);
    manifest["outputs"] = outputs;
    manifest["diagnostics"] = {{"n_places", n_places}};
    dump_manifest(manifest, *out_dir);
  }
  return report;
}

// --- fixture -----------------------------------------------------------------

std::vector<int> parse_years(std::string_view text) {
  const std::string t = trim(text);
  std::vector<int> years;
  if (t.find(',') == std::string::npos) {
    const auto n = parse_count("years", t);
    // A bare four-digit number is a single year, anything smaller a count.
    if (n >= 1000 && n < 100000) return {static_cast<int>(n)};
    if (n < 1 || n >= 1000) throw ConfigError("years must be a count below 1000, a year or a list");
    for (std::uint64_t i = 0; i < n; ++i) years.push_back(1990 + 10 * static_cast<int>(i));
    return years;
  }
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string v = trim(item);
    int y = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), y);
    if (ec != std::errc() || end != v.data() + v.size() || v.empty()) {
      throw ConfigError("years: '" + v + "' is not an integer year");
    }
    years.push_back(y);
  }
  for (std::size_t i = 1; i < years.size(); ++i) {
    if (years[i] <= years[i - 1]) throw ConfigError("years must be strictly increasing");
  }
  return years;
}

FixtureOptions plan_fixture(const KeyValues& settings, std::uint64_t default_seed) {
  static const std::set<std::string> known{"model", "lambda", "u_max", "mean_u", "var_u", "x0",
                                           "n",     "years",  "K",     "seed"};
  FixtureOptions o;
  o.seed = default_seed;
  for (const auto& [key, value] : settings) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' for fixture");
    if (key == "model") o.model = trim(value);
    if (key == "lambda") o.lambda = parse_double(key, value);
    if (key == "u_max") o.u_max = parse_double(key, value);
    if (key == "mean_u") o.mean_u = parse_double(key, value);
    if (key == "var_u") o.var_u = parse_double(key, value);
    if (key == "x0") o.x0 = parse_double(key, value);
    if (key == "n") o.n = parse_count(key, value);
    if (key == "years") o.years = parse_years(value);
    if (key == "K") o.K = parse_double(key, value);
    if (key == "seed") o.seed = parse_count(key, value);
  }
  if (o.n < 1) throw ConfigError("n must be at least 1");
  if (!(o.K >= 0.0) || !std::isfinite(o.K)) throw ConfigError("K must be nonnegative");
  if (!(o.x0 > 0.0)) throw ConfigError("x0 must be positive");
  fixture_model(o);
  return o;
}

KeyValues fixture_settings(const FixtureOptions& o) {
  std::string years;
  for (std::size_t i = 0; i < o.years.size(); ++i) years += (i ? "," : "") + std::to_string(o.years[i]);
  return {{"model", o.model},    {"lambda", num(o.lambda)}, {"u_max", num(o.u_max)},
          {"mean_u", num(o.mean_u)}, {"var_u", num(o.var_u)},   {"x0", num(o.x0)},
          {"n", std::to_string(o.n)}, {"years", years},       {"K", num(o.K)},
          {"seed", std::to_string(o.seed)}};
}

EquilibriumModel fixture_model(const FixtureOptions& o) {
  if (o.model == "zipf") return EquilibriumModel::zipf(o.x0);
  if (o.model == "power_law") {
    if (!(o.lambda > 0.0)) throw ConfigError("power_law needs lambda > 0");
    return EquilibriumModel::power_law(o.lambda, o.x0);
  }
  if (o.model == "benford") {
    if (!(o.u_max > 0.0) || !std::isfinite(o.u_max)) throw ConfigError("benford needs a finite u_max > 0");
    return EquilibriumModel::benford(o.u_max, o.x0);
  }
  if (o.model == "lognormal") {
    if (!(o.var_u > 0.0)) throw ConfigError("lognormal needs var_u > 0");
    return EquilibriumModel::log_normal(o.mean_u, o.var_u, o.x0);
  }
  throw ConfigError("unknown fixture model '" + o.model + "' (zipf, power_law, benford, lognormal)");
}

json cmd_fixture(const FixtureOptions& opts, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const auto series = synthesize_fixture(fixture_model(opts), opts.n, opts.years, opts.K, opts.seed);
  std::ostringstream csv;
  write_long_csv(series, csv);
  write_text(out_dir / "fixture.csv", csv.str());

  json manifest;
  manifest["command"] = "fixture";
  manifest["config"] = fixture_settings(opts);
  manifest["seed"] = opts.seed;
  manifest["tool_version"] = std::string(kToolVersion);
  manifest["outputs"] = {"fixture.csv"};
  manifest["diagnostics"] = {{"n_places", series.places().size()}, {"years", series.years()}};
  dump_manifest(manifest, out_dir);
  return manifest;
}

// --- replay ------------------------------------------------------------------

json replay_manifest(const fs::path& manifest_path, const std::optional<fs::path>& out_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path dir = out_dir.value_or(manifest_path.parent_path().empty() ? fs::path(".")
                                                                             : manifest_path.parent_path());
  try {
    const std::string command = m.at("command").get<std::string>();
    const auto config = m.at("config").get<KeyValues>();
    if (command == "simulate") return cmd_simulate(plan_simulation(m.at("mode").get<std::string>(), config), dir);
    if (command == "fixture") return cmd_fixture(plan_fixture(config), dir);
    throw ConfigError("manifest command '" + command + "' cannot be replayed");
  } catch (const json::exception& e) {
    throw ConfigError("manifest " + manifest_path.string() + ": " + e.what());
  }
}

// --- command line --------------------------------------------------------------

namespace {

std::uint64_t env_seed() {
  const char* s = std::getenv("SFMAXENT_SEED");
  if (!s || !*s) return 1;
  return parse_count("SFMAXENT_SEED", s);
}

void apply_sets(KeyValues& kv, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv[trim(std::string_view(s).substr(0, eq))] = trim(std::string_view(s).substr(eq + 1));
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scale-invariant growth: walker simulation, MaxEnt solving and rank-size analysis", "sfmaxent"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run free, bounded or zipf walker dynamics");
  std::string sim_mode;
  std::string sim_config;
  std::string sim_out = "out";
  std::string sim_seed;
  std::vector<std::string> sim_sets;
  sim->add_option("mode", sim_mode, "free | bounded | zipf")->required();
  sim->add_option("-c,--config", sim_config, "key = value config file");
  sim->add_option("-o,--out", sim_out, "output directory");
  sim->add_option("--seed", sim_seed, "random seed (default SFMAXENT_SEED or 1)");
  sim->add_option("--set", sim_sets, "override a config key, key=value");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve the Lagrange multipliers for a constraint set");
  std::string solve_umax;
  std::string solve_mean;
  bool solve_norm = false;
  double solve_x0 = 1.0;
  std::string solve_out;
  solve->add_option("--u-max", solve_umax, "volume bound in u (default inf)");
  solve->add_option("--mean-u", solve_mean, "target <u>");
  solve->add_flag("--normalized", solve_norm, "enforce normalization");
  solve->add_option("--x0", solve_x0, "reference scale");
  solve->add_option("-o,--out", solve_out, "also write model.json and manifest.json here");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Statistics of a multi-year population table");
  AnalyzeOptions aopts;
  std::string a_years;
  std::string a_schema;
  std::string a_include;
  std::string a_out;
  std::string a_space = "log";
  std::vector<std::string> a_models;
  analyze->add_option("data", aopts.data, "CSV file, or - for stdin")->required();
  analyze->add_option("--schema", a_schema, "column mapping config (default: long format)");
  analyze->add_option("--model", a_models, "benford, lognormal, zipf, power_law:<lambda> or model JSON")
      ->delimiter(',');
  analyze->add_option("--top-n", aopts.top_n, "size of the Zipf regime");
  analyze->add_option("--years", a_years, "comma-separated years to use");
  analyze->add_option("--include", a_include, "file of place ids to keep");
  analyze->add_option("--fit-space", a_space, "log | linear")->check(CLI::IsMember({"log", "linear"}));
  analyze->add_option("-o,--out", a_out, "write report.json, rank CSVs and manifest.json here");

  // fixture
  auto* fixture = app.add_subcommand("fixture", "Synthetic multi-year population table");
  std::string f_config;
  std::string f_out;
  KeyValues f_flags;
  for (const char* key : {"model", "lambda", "u_max", "mean_u", "var_u", "x0", "n", "years", "K", "seed"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin() + 2, flag.end(), '_', '-');
    fixture->add_option_function<std::string>(flag, [&f_flags, key](const std::string& v) { f_flags[key] = v; });
  }
  fixture->add_option("-c,--config", f_config, "key = value config file");
  fixture->add_option("-o,--out", f_out, "output directory (default: CSV to stdout)");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run a simulate or fixture manifest");
  std::string r_manifest;
  std::string r_out;
  replay->add_option("manifest", r_manifest, "manifest.json")->required();
  replay->add_option("-o,--out", r_out, "output directory (default: the manifest's)");

  std::vector<const char*> argv{"sfmaxent"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) {
      KeyValues kv = sim_config.empty() ? KeyValues{} : load_config(sim_config);
      apply_sets(kv, sim_sets);
      if (!sim_seed.empty()) kv["seed"] = sim_seed;
      const auto plan = plan_simulation(sim_mode, kv, env_seed());
      const json manifest = cmd_simulate(plan, sim_out);
      out << fmt::format("simulate {}: {} files in {}\n", sim_mode, manifest["outputs"].size() + 1, sim_out);
      out << manifest["diagnostics"]["summary"].dump() << "\n";
    } else if (solve->parsed()) {
      SolveOptions o;
      if (!solve_umax.empty()) o.u_max = parse_double("u-max", solve_umax);
      if (!solve_mean.empty()) o.mean_u = parse_double("mean-u", solve_mean);
      o.normalized = solve_norm;
      o.x0 = solve_x0;
      const json model = cmd_solve(o);
      out << model.dump(2) << "\n";
      if (!solve_out.empty()) {
        ensure_dir(solve_out);
        write_text(fs::path(solve_out) / "model.json", model.dump(2) + "\n");
        json manifest{{"command", "solve"},
                      {"config",
                       {{"u_max", solve_umax.empty() ? "inf" : solve_umax},
                        {"mean_u", solve_mean.empty() ? json(nullptr) : json(solve_mean)},
                        {"normalized", solve_norm},
                        {"x0", solve_x0}}},
                      {"tool_version", std::string(kToolVersion)},
                      {"outputs", {"model.json"}},
                      {"diagnostics", model["residuals"]}};
        dump_manifest(manifest, solve_out);
      }
    } else if (analyze->parsed()) {
      if (!a_models.empty()) aopts.models = a_models;
      if (!a_schema.empty()) aopts.schema = a_schema;
      if (!a_include.empty()) aopts.include = a_include;
      if (!a_years.empty()) aopts.years = parse_years(a_years);
      aopts.linear_fit_space = a_space == "linear";
      const json report = cmd_analyze(aopts, in, a_out.empty() ? std::nullopt : std::optional<fs::path>(a_out));
      out << report.dump(2) << "\n";
    } else if (fixture->parsed()) {
      KeyValues kv = f_config.empty() ? KeyValues{} : load_config(f_config);
      for (const auto& [k, v] : f_flags) kv[k] = v;
      const auto opts = plan_fixture(kv, env_seed());
      if (f_out.empty()) {
        write_long_csv(synthesize_fixture(fixture_model(opts), opts.n, opts.years, opts.K, opts.seed), out);
      } else {
        cmd_fixture(opts, f_out);
        out << fmt::format("fixture: {} places in {}\n", opts.n, f_out);
      }
    } else if (replay->parsed()) {
      const json manifest =
          replay_manifest(r_manifest, r_out.empty() ? std::nullopt : std::optional<fs::path>(r_out));
      out << fmt::format("replayed {}: {} outputs\n", manifest["command"].get<std::string>(),
                         manifest["outputs"].size());
    }
  } catch (const InfeasibleError& e) {
    err << "error: infeasible constraint (" << e.rule() << "): " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << " (residual " << e.residual() << ")\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {  // ConfigError and argument checks
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::logic_error& e) {  // domain and range errors
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace sfmaxent
