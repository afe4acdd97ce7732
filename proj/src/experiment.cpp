#include "dsn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dsn/gradcheck.hpp"
#include "dsn/image_io.hpp"

namespace fs = std::filesystem;

namespace dsn {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (...) {
    throw ConfigError("config key '" + key + "': not a finite number: '" + v + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int64_t n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (...) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
  }
}

uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    uint64_t n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (...) {
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" + v + "'");
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "alpha",        "batch_size", "beta",        "eval_interval",     "eval_per_domain", "gamma",
      "lr",           "lr_decay_factor", "lr_decay_interval", "momentum", "output_dir",    "recon_loss",
      "scenario",     "seed",       "similarity",  "steps",             "train_per_domain", "variant",
      "warmup_steps", "xi"};
  return keys;
}

}  // namespace

uint64_t derive_seed(uint64_t seed, uint64_t tag) { return SplitMix64::mix(seed ^ SplitMix64::mix(tag)); }

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
    if (kv.count(key)) throw ConfigError("duplicate config key '" + key + "'");
    kv[key] = val;
  }
  for (const char* required : {"scenario", "variant"})
    if (!kv.count(required)) throw ConfigError(std::string("missing required config key '") + required + "'");

  ExperimentConfig c;
  try {
    c.scenario = scenario_from_string(kv.at("scenario"));
    c.variant = variant_from_string(kv.at("variant"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (kv.count("similarity")) {
    if (c.variant != Variant::dsn)
      throw ConfigError("config key 'similarity' only applies to variant=dsn");
    try {
      c.similarity = similarity_from_string(kv.at("similarity"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (c.similarity == Similarity::none) throw ConfigError("variant=dsn requires a similarity loss");
  }

  auto dbl = [&](const char* k, double& dst, bool nonneg = false) {
    if (!kv.count(k)) return;
    dst = parse_double(k, kv.at(k));
    if (nonneg && dst < 0.0) throw ConfigError(std::string("config key '") + k + "' must be nonnegative");
  };
  auto i64 = [&](const char* k, int64_t& dst, int64_t lo) {
    if (!kv.count(k)) return;
    dst = parse_int(k, kv.at(k));
    if (dst < lo) throw ConfigError(std::string("config key '") + k + "' must be at least " + std::to_string(lo));
  };
  dbl("alpha", c.alpha, true);
  dbl("beta", c.beta, true);
  dbl("gamma", c.gamma, true);
  dbl("xi", c.xi, true);
  dbl("lr", c.lr);
  dbl("momentum", c.momentum, true);
  dbl("lr_decay_factor", c.lr_decay_factor, true);
  i64("warmup_steps", c.warmup_steps, 0);
  i64("lr_decay_interval", c.lr_decay_interval, 1);
  i64("steps", c.steps, 1);
  i64("eval_interval", c.eval_interval, 1);
  int64_t tmp;
  if (kv.count("batch_size")) {
    tmp = parse_int("batch_size", kv.at("batch_size"));
    if (tmp < 1) throw ConfigError("config key 'batch_size' must be at least 1");
    c.batch_size = static_cast<int>(tmp);
  }
  if (kv.count("train_per_domain")) {
    tmp = parse_int("train_per_domain", kv.at("train_per_domain"));
    if (tmp < 1) throw ConfigError("config key 'train_per_domain' must be at least 1");
    c.train_per_domain = static_cast<int>(tmp);
  }
  if (kv.count("eval_per_domain")) {
    tmp = parse_int("eval_per_domain", kv.at("eval_per_domain"));
    if (tmp < 1) throw ConfigError("config key 'eval_per_domain' must be at least 1");
    c.eval_per_domain = static_cast<int>(tmp);
  }
  if (kv.count("recon_loss")) {
    const std::string& r = kv.at("recon_loss");
    if (r == "si_mse")
      c.recon = ReconKind::si_mse;
    else if (r == "mse")
      c.recon = ReconKind::mse;
    else
      throw ConfigError("config key 'recon_loss' must be si_mse or mse, got '" + r + "'");
  }
  if (kv.count("seed")) c.seed = parse_uint("seed", kv.at("seed"));
  if (kv.count("output_dir")) {
    if (kv.at("output_dir").empty()) throw ConfigError("config key 'output_dir' must not be empty");
    c.output_dir = kv.at("output_dir");
  }
  return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "alpha=" << fmt_double(alpha) << "\n";
  out << "batch_size=" << batch_size << "\n";
  out << "beta=" << fmt_double(beta) << "\n";
  out << "eval_interval=" << eval_interval << "\n";
  out << "eval_per_domain=" << eval_per_domain << "\n";
  out << "gamma=" << fmt_double(gamma) << "\n";
  out << "lr=" << fmt_double(lr) << "\n";
  out << "lr_decay_factor=" << fmt_double(lr_decay_factor) << "\n";
  out << "lr_decay_interval=" << lr_decay_interval << "\n";
  out << "momentum=" << fmt_double(momentum) << "\n";
  out << "recon_loss=" << (recon == ReconKind::si_mse ? "si_mse" : "mse") << "\n";
  out << "scenario=" << to_string(scenario) << "\n";
  out << "seed=" << seed << "\n";
  out << "similarity=" << to_string(effective_similarity(variant, similarity)) << "\n";
  out << "steps=" << steps << "\n";
  out << "train_per_domain=" << train_per_domain << "\n";
  out << "variant=" << to_string(variant) << "\n";
  out << "warmup_steps=" << warmup_steps << "\n";
  out << "xi=" << fmt_double(xi) << "\n";
  return out.str();
}

std::string ExperimentConfig::run_id() const {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
  return buf;
}

ScenarioSpec ExperimentConfig::scenario_spec() const {
  ScenarioSpec s;
  s.scenario = scenario;
  s.train_per_domain = train_per_domain;
  s.eval_per_domain = eval_per_domain;
  s.seed = derive_seed(seed, 0xDA7A);
  return s;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = batch_size;
  t.lr = lr;
  t.momentum = momentum;
  t.decay = {lr_decay_factor, lr_decay_interval};
  t.weights = {alpha, beta, gamma, xi, warmup_steps};
  t.recon = recon;
  t.eval_interval = eval_interval;
  t.seed = derive_seed(seed, 0xBA7C);
  return t;
}

uint64_t ExperimentConfig::model_seed() const { return derive_seed(seed, 0x90DE); }

std::string run_dir(const ExperimentConfig& cfg) { return cfg.output_dir + "/" + cfg.run_id(); }

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); }

void write_metrics_header(std::ofstream& f) {
  f << "step,lr,l_task,l_recon,l_diff,l_sim,src_acc,tgt_acc,angle_err\n";
}

void write_metrics_row(std::ofstream& f, const TrainRecord& r) {
  f << r.step << "," << fmt_double(r.lr) << "," << fmt_double(r.l_task) << "," << opt_field(r.l_recon) << ","
    << opt_field(r.l_diff) << "," << opt_field(r.l_sim) << "," << opt_field(r.src_acc) << ","
    << opt_field(r.tgt_acc) << "," << opt_field(r.angle_err) << "\n";
}

ExperimentConfig resolve(const std::string& config_path, const RunOptions& opts) {
  ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
  if (opts.seed_override) cfg.seed = *opts.seed_override;
  if (opts.out_override) cfg.output_dir = *opts.out_override;
  return cfg;
}

}  // namespace

int cmd_run(const std::string& config_path, const RunOptions& opts) {
  try {
    ExperimentConfig cfg = resolve(config_path, opts);
    std::string dir = run_dir(cfg);
    if (fs::exists(dir + "/summary.csv")) {
      if (!opts.quiet) std::printf("run %s already complete, skipping (remove %s to redo)\n", cfg.run_id().c_str(), dir.c_str());
      return 0;
    }
    fs::create_directories(dir);
    {
      std::ofstream f(dir + "/config.resolved.txt", std::ios::trunc);
      f << cfg.canonical();
    }

    DomainData data = generate(cfg.scenario_spec());
    DsnModel model = build_desk_topology(cfg.scenario, cfg.variant, cfg.similarity, cfg.model_seed());

    std::ofstream metrics(dir + "/metrics.csv", std::ios::trunc);
    write_metrics_header(metrics);
    TrainResult result = train(model, data, cfg.train_config(), [&](const TrainRecord& r) {
      write_metrics_row(metrics, r);
      if (!opts.quiet && r.src_acc) {
        std::printf("step %6lld  lr %.5f  task %.4f  src_acc %.4f  tgt_acc %.4f%s\n",
                    static_cast<long long>(r.step), r.lr, r.l_task, *r.src_acc, *r.tgt_acc,
                    r.angle_err ? ("  angle " + fmt_double(*r.angle_err)).c_str() : "");
        std::fflush(stdout);
      }
    });
    metrics.close();

    save_checkpoint(model.params, dir + "/ckpt.bin", dir + "/ckpt.index.txt");
    {
      std::ofstream f(dir + "/summary.csv", std::ios::trunc);
      f << "run_id,scenario,variant,similarity,seed,steps,final_src_acc,final_tgt_acc,final_angle_err\n";
      f << cfg.run_id() << "," << to_string(cfg.scenario) << "," << to_string(cfg.variant) << ","
        << to_string(effective_similarity(cfg.variant, cfg.similarity)) << "," << cfg.seed << "," << cfg.steps << ","
        << fmt_double(result.final_src_acc) << "," << fmt_double(result.final_tgt_acc) << ","
        << (result.final_angle_err ? fmt_double(*result.final_angle_err) : std::string()) << "\n";
    }
    if (!opts.quiet)
      std::printf("run %s done: tgt_acc %.4f%s\n", cfg.run_id().c_str(), result.final_tgt_acc,
                  result.final_angle_err ? (" angle " + fmt_double(*result.final_angle_err)).c_str() : "");
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

// ---------------------------------------------------------------------------

namespace {

struct SummaryRow {
  std::string scenario, variant, similarity;
  uint64_t seed = 0;
  double tgt_acc = 0.0;
  std::optional<double> angle;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

int cmd_table(const std::string& runs_dir, bool quiet) {
  try {
    if (!fs::is_directory(runs_dir)) throw ConfigError("not a directory: '" + runs_dir + "'");
    std::vector<SummaryRow> rows;
    std::vector<std::string> dirs;
    for (const auto& e : fs::directory_iterator(runs_dir))
      if (e.is_directory() && fs::exists(e.path() / "summary.csv")) dirs.push_back(e.path().string());
    std::sort(dirs.begin(), dirs.end());
    for (const std::string& d : dirs) {
      std::ifstream f(d + "/summary.csv");
      std::string header, line;
      std::getline(f, header);
      while (std::getline(f, line)) {
        auto c = split_csv(line);
        if (c.size() != 9) continue;
        SummaryRow r;
        r.scenario = c[1];
        r.variant = c[2];
        r.similarity = c[3];
        r.seed = std::stoull(c[4]);
        r.tgt_acc = std::stod(c[6]);
        if (!c[8].empty()) r.angle = std::stod(c[8]);
        rows.push_back(r);
      }
    }
    if (rows.empty()) throw ConfigError("no completed runs under '" + runs_dir + "'");

    std::map<std::string, std::vector<SummaryRow>> groups;
    for (const auto& r : rows) groups[r.scenario + "," + r.variant + "," + r.similarity].push_back(r);

    std::ostringstream text, csv;
    csv << "scenario,variant,similarity,seeds,tgt_acc_mean,tgt_acc_min,tgt_acc_max,angle_mean,angle_min,angle_max\n";
    text << "scenario    variant       similarity  seeds  target accuracy             angle error\n";
    for (const auto& [key, g] : groups) {
      double sum = 0, lo = 1e300, hi = -1e300;
      double asum = 0, alo = 1e300, ahi = -1e300;
      int acount = 0;
      for (const auto& r : g) {
        sum += r.tgt_acc;
        lo = std::min(lo, r.tgt_acc);
        hi = std::max(hi, r.tgt_acc);
        if (r.angle) {
          asum += *r.angle;
          alo = std::min(alo, *r.angle);
          ahi = std::max(ahi, *r.angle);
          ++acount;
        }
      }
      double mean = sum / g.size();
      auto c = split_csv(key);
      char tline[256];
      if (acount) {
        std::snprintf(tline, sizeof(tline), "%-11s %-13s %-11s %-6zu %.4f [%.4f, %.4f]    %.2f [%.2f, %.2f]\n",
                      c[0].c_str(), c[1].c_str(), c[2].c_str(), g.size(), mean, lo, hi, asum / acount, alo, ahi);
        csv << c[0] << "," << c[1] << "," << c[2] << "," << g.size() << "," << fmt_double(mean) << ","
            << fmt_double(lo) << "," << fmt_double(hi) << "," << fmt_double(asum / acount) << "," << fmt_double(alo)
            << "," << fmt_double(ahi) << "\n";
      } else {
        std::snprintf(tline, sizeof(tline), "%-11s %-13s %-11s %-6zu %.4f [%.4f, %.4f]\n", c[0].c_str(),
                      c[1].c_str(), c[2].c_str(), g.size(), mean, lo, hi);
        csv << c[0] << "," << c[1] << "," << c[2] << "," << g.size() << "," << fmt_double(mean) << ","
            << fmt_double(lo) << "," << fmt_double(hi) << ",,,\n";
      }
      text << tline;
    }
    {
      std::ofstream f(runs_dir + "/results_table.csv", std::ios::trunc);
      f << csv.str();
    }
    if (!quiet) std::fputs(text.str().c_str(), stdout);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

// ---------------------------------------------------------------------------

namespace {

// original | combined | shared only | private only
Tensor recon_grid(DsnModel& model, const Dataset& set, int n, DomainSide side) {
  std::vector<int> idx;
  for (int i = 0; i < n; ++i) idx.push_back(i);
  Tensor originals = set.images_of(idx);
  Tensor combined = decode_partial(model, originals, side, DecodeMode::combined);
  Tensor shared = decode_partial(model, originals, side, DecodeMode::shared_only);
  Tensor priv = decode_partial(model, originals, side, DecodeMode::private_only);

  int h = originals.shape[1], w = originals.shape[2], c = originals.shape[3];
  Tensor grid({n * h, 4 * w, c}, 0.0);
  const Tensor* cols[4] = {&originals, &combined, &shared, &priv};
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < 4; ++col)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int ch = 0; ch < c; ++ch)
            grid.data[((static_cast<int64_t>(row) * h + y) * (4 * w) + col * w + x) * c + ch] =
                cols[col]->data[((static_cast<int64_t>(row) * h + y) * w + x) * c + ch];
  return grid;
}

}  // namespace

int cmd_dump_recon(const std::string& config_path, const RunOptions& opts, int n) {
  try {
    ExperimentConfig cfg = resolve(config_path, opts);
    if (cfg.scenario == Scenario::blobs2d) throw ConfigError("dump-recon needs an image scenario");
    if (n <= 0) throw ConfigError("dump-recon needs a positive sample count");
    if (n > cfg.eval_per_domain) throw ConfigError("dump-recon: sample count exceeds eval_per_domain");
    std::string dir = run_dir(cfg);
    std::string ckpt = dir + "/ckpt.bin";
    if (!fs::exists(ckpt)) throw ConfigError("no checkpoint at " + ckpt + "; run the config first");

    DsnModel model = build_desk_topology(cfg.scenario, Variant::dsn, Similarity::none, cfg.model_seed());
    try {
      load_checkpoint(model.params, ckpt);
    } catch (const std::runtime_error& e) {
      throw ConfigError(e.what());
    }

    DomainData data = generate(cfg.scenario_spec());
    write_pnm(dir + "/recon_source.ppm", to_u8(recon_grid(model, data.src_eval, n, DomainSide::source)));
    write_pnm(dir + "/recon_target.ppm", to_u8(recon_grid(model, data.tgt_eval, n, DomainSide::target)));
    if (!opts.quiet) std::printf("wrote %s/recon_source.ppm and recon_target.ppm (%d rows)\n", dir.c_str(), n);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

int cmd_gen_data(const std::string& config_path, const RunOptions& opts) {
  try {
    ExperimentConfig cfg = resolve(config_path, opts);
    DomainData data = generate(cfg.scenario_spec());
    std::string out = opts.out_override.value_or(cfg.output_dir + "/dataset-" + cfg.run_id());
    Dataset source = data.src_train;
    source.samples.insert(source.samples.end(), data.src_eval.samples.begin(), data.src_eval.samples.end());
    Dataset target = data.tgt_train;
    target.samples.insert(target.samples.end(), data.tgt_eval.samples.begin(), data.tgt_eval.samples.end());
    try {
      dump_dataset(source, out + "/source");
      dump_dataset(target, out + "/target");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (!opts.quiet)
      std::printf("wrote %zu source and %zu target images under %s\n", source.samples.size(), target.samples.size(),
                  out.c_str());
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

// ---------------------------------------------------------------------------
// gradient-check suite

namespace {

Tensor rand_tensor(SplitMix64& rng, Shape shape, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

Tensor rand_onehot(SplitMix64& rng, int n, int c) {
  Tensor t({n, c}, 0.0);
  for (int i = 0; i < n; ++i) t.at(i, static_cast<int>(rng.below(static_cast<uint64_t>(c)))) = 1.0;
  return t;
}

Tensor rand_unit_quats(SplitMix64& rng, int n) {
  Tensor t({n, 4});
  for (int i = 0; i < n; ++i) {
    Quaternion q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    q = q.normalized();
    t.at(i, 0) = q.w;
    t.at(i, 1) = q.x;
    t.at(i, 2) = q.y;
    t.at(i, 3) = q.z;
  }
  return t;
}

struct LossCase {
  std::string name;
  double threshold = 1e-4;
  // Produces fresh leaves and a builder for one random instance.
  std::function<void(SplitMix64&, std::vector<Tensor>&, std::vector<std::string>&, LossBuilder&)> make;
};

std::vector<LossCase> loss_cases() {
  std::vector<LossCase> cases;

  cases.push_back({"task_nll", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 2 + static_cast<int>(r.below(4)), c = 2 + static_cast<int>(r.below(4));
                     leaves = {rand_tensor(r, {n, c})};
                     names = {"logits"};
                     Tensor y = rand_onehot(r, n, c);
                     build = [y](Graph&, const std::vector<Var>& v) { return task_nll(softmax_rows(v[0]), y); };
                   }});

  cases.push_back({"si_mse", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 1 + static_cast<int>(r.below(3)), k = 2 + static_cast<int>(r.below(6));
                     leaves = {rand_tensor(r, {n, k}), rand_tensor(r, {n, k})};
                     names = {"x", "x_hat"};
                     build = [](Graph&, const std::vector<Var>& v) { return si_mse(v[0], v[1]); };
                   }});

  cases.push_back({"reconstruction_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 1 + static_cast<int>(r.below(3)), k = 2 + static_cast<int>(r.below(6));
                     leaves = {rand_tensor(r, {n, k}), rand_tensor(r, {n, k}), rand_tensor(r, {n, k}),
                               rand_tensor(r, {n, k})};
                     names = {"xs", "xs_hat", "xt", "xt_hat"};
                     build = [](Graph&, const std::vector<Var>& v) { return reconstruction_loss(v[0], v[1], v[2], v[3]); };
                   }});

  cases.push_back({"difference_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 2 + static_cast<int>(r.below(3)), d = 2 + static_cast<int>(r.below(4));
                     leaves = {rand_tensor(r, {n, d}), rand_tensor(r, {n, d}), rand_tensor(r, {n, d}),
                               rand_tensor(r, {n, d})};
                     names = {"hc_s", "hp_s", "hc_t", "hp_t"};
                     build = [](Graph&, const std::vector<Var>& v) { return difference_loss(v[0], v[1], v[2], v[3]); };
                   }});

  cases.push_back({"dann_domain_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int m = 2 + static_cast<int>(r.below(6));
                     leaves = {rand_tensor(r, {m, 1})};
                     names = {"domain_logits"};
                     Tensor d({m}, 0.0);
                     for (int i = 0; i < m; ++i) d[i] = r.below(2) ? 1.0 : 0.0;
                     build = [d](Graph&, const std::vector<Var>& v) { return dann_domain_loss(sigmoid(v[0]), d); };
                   }});

  cases.push_back({"mmd_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int ns = 1 + static_cast<int>(r.below(4)), nt = 1 + static_cast<int>(r.below(4));
                     int d = 2 + static_cast<int>(r.below(4));
                     leaves = {rand_tensor(r, {ns, d}), rand_tensor(r, {nt, d})};
                     names = {"hc_s", "hc_t"};
                     build = [](Graph&, const std::vector<Var>& v) {
                       return mmd_loss(v[0], v[1], KernelSpec::default_multi_rbf());
                     };
                   }});

  cases.push_back({"correg_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int ns = 2 + static_cast<int>(r.below(3)), nt = 2 + static_cast<int>(r.below(3));
                     int d = 2 + static_cast<int>(r.below(4));
                     leaves = {rand_tensor(r, {ns, d}), rand_tensor(r, {nt, d})};
                     names = {"hc_s", "hc_t"};
                     build = [](Graph&, const std::vector<Var>& v) { return correg_loss(v[0], v[1]); };
                   }});

  cases.push_back({"pose_task_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 2 + static_cast<int>(r.below(3));
                     Tensor q = rand_unit_quats(r, n);
                     // keep |q . qhat| away from both the clamp floor and the
                     // abs kink so central differences stay valid
                     Tensor qhat({n, 4});
                     for (int i = 0; i < n; ++i) {
                       for (;;) {
                         double row[4], ss = 0.0;
                         for (double& v : row) {
                           v = r.uniform(-1.5, 1.5);
                         }
                         for (double v : row) ss += v * v;
                         if (ss < 0.09) continue;
                         double dot = 0.0;
                         for (int j = 0; j < 4; ++j) dot += row[j] * q.at(i, j);
                         dot /= std::sqrt(ss);
                         if (std::fabs(dot) < 0.02 || std::fabs(dot) > 0.95) continue;
                         for (int j = 0; j < 4; ++j) qhat.at(i, j) = row[j];
                         break;
                       }
                     }
                     int c = 3;
                     leaves = {rand_tensor(r, {n, c}), qhat};
                     names = {"logits", "qhat"};
                     Tensor y = rand_onehot(r, n, c);
                     build = [y, q](Graph&, const std::vector<Var>& v) {
                       return pose_task_loss(softmax_rows(v[0]), y, v[1], q, 0.125);
                     };
                   }});

  cases.push_back({"total_loss", 1e-4, [](SplitMix64& r, auto& leaves, auto& names, LossBuilder& build) {
                     int n = 2 + static_cast<int>(r.below(2)), d = 3, c = 3, k = 4;
                     leaves = {rand_tensor(r, {n, c}),  rand_tensor(r, {n, k}), rand_tensor(r, {n, k}),
                               rand_tensor(r, {n, d}),  rand_tensor(r, {n, d}), rand_tensor(r, {n, d}),
                               rand_tensor(r, {n, d})};
                     names = {"logits", "x", "x_hat", "hc_s", "hp_s", "hc_t", "hp_t"};
                     Tensor y = rand_onehot(r, n, c);
                     build = [y](Graph&, const std::vector<Var>& v) {
                       LossParts parts;
                       parts.task = task_nll(softmax_rows(v[0]), y);
                       parts.recon = reconstruction_loss(v[1], v[2], v[2], v[1]);
                       parts.diff = difference_loss(v[3], v[4], v[5], v[6]);
                       parts.sim = mmd_loss(v[3], v[5], KernelSpec::default_multi_rbf());
                       return total_loss(parts, {0.3, 0.2, 0.5, 0.0, 0}, 1);
                     };
                   }});

  return cases;
}

// End-to-end probes of a tiny glyph16 DSN batch, five random indices per
// parameter group. The MMD model is a plain finite-difference check of every
// group. Under DANN the reversal makes the theta_c gradient intentionally
// differ from the forward loss's derivative, so theta_c is verified against
// the signed decomposition FD(task+recon+diff) - FD(gamma * similarity); all
// other groups never cross the reversal and get the plain check.
GradcheckLine end_to_end_probe(double threshold) {
  SplitMix64 rng(77);
  Tensor xs = rand_tensor(rng, {2, 16, 16, 3}, -1.0, 1.0);
  Tensor xt = rand_tensor(rng, {2, 16, 16, 3}, -1.0, 1.0);
  Tensor y = rand_onehot(rng, 2, 10);
  Tensor dlab = Tensor::of({4}, {0, 0, 1, 1});
  const LossWeights weights{0.05, 0.05, 0.25, 0.0, 0};
  double worst = 0.0;

  // 0 = everything, 1 = task+recon+diff only, 2 = gamma * similarity only
  auto make_builder = [&](DsnModel& model, int parts_mode) {
    return [&model, &xs, &xt, &y, &dlab, weights, parts_mode](Graph& g, const std::vector<Var>& vars) {
      BoundParams bp = bind_from_vars(model, vars);
      ForwardOutputs fo = forward(g, model, bp, xs, &xt);
      LossParts parts;
      parts.task = task_nll(fo.yhat_s, y);
      Var xsv = g.constant(xs), xtv = g.constant(xt);
      parts.recon = reconstruction_loss(xsv, fo.xhat_s, xtv, fo.xhat_t);
      parts.diff = difference_loss(fo.hc_s, fo.hp_s, fo.hc_t, fo.hp_t);
      Var sim = model.similarity == Similarity::dann ? dann_domain_loss(fo.dhat, dlab)
                                                     : mmd_loss(fo.hc_s, fo.hc_t, KernelSpec::default_multi_rbf());
      if (parts_mode == 2) return mul_scalar(sim, weights.gamma);
      if (parts_mode == 0) parts.sim = sim;
      return total_loss(parts, weights, weights.warmup_steps);
    };
  };

  auto collect = [&](DsnModel& model, std::vector<Tensor>& leaves, std::vector<std::string>& names) {
    for (const Param* p : model.params.all()) {
      leaves.push_back(p->value);
      names.push_back(p->name);
    }
  };
  auto probe_of = [&](const std::vector<Tensor>& leaves, bool skip_theta_c, size_t theta_c_count) {
    std::vector<std::vector<int64_t>> probe(leaves.size());
    for (size_t i = 0; i < leaves.size(); ++i) {
      if (skip_theta_c && i < theta_c_count) continue;
      for (int k = 0; k < 5; ++k)
        probe[i].push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(leaves[i].size()))));
    }
    return probe;
  };

  {
    DsnModel mmd_model = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::mmd, 2024);
    std::vector<Tensor> leaves;
    std::vector<std::string> names;
    collect(mmd_model, leaves, names);
    auto probe = probe_of(leaves, false, 0);
    LossBuilder build = make_builder(mmd_model, 0);
    worst = std::max(worst, finite_difference_check(build, leaves, names, 1e-5, &probe).max_rel_err);
  }

  {
    DsnModel dann_model = build_desk_topology(Scenario::glyph16, Variant::dsn, Similarity::dann, 2025);
    std::vector<Tensor> leaves;
    std::vector<std::string> names;
    collect(dann_model, leaves, names);
    size_t theta_c_count = dann_model.params.theta_c.size();

    auto probe = probe_of(leaves, true, theta_c_count);
    LossBuilder full = make_builder(dann_model, 0);
    worst = std::max(worst, finite_difference_check(full, leaves, names, 1e-5, &probe).max_rel_err);

    // theta_c under the reversal: analytic against the signed decomposition.
    std::vector<Tensor> analytic;
    {
      Graph g;
      std::vector<Var> vars;
      for (size_t i = 0; i < leaves.size(); ++i) vars.push_back(g.leaf(leaves[i], names[i], true));
      GradientMap gm = g.backward(full(g, vars));
      for (size_t i = 0; i < theta_c_count; ++i) analytic.push_back(gm.at(vars[i]));
    }
    LossBuilder no_sim = make_builder(dann_model, 1);
    LossBuilder sim_only = make_builder(dann_model, 2);
    auto eval = [&](const LossBuilder& b) {
      Graph g;
      std::vector<Var> vars;
      for (size_t i = 0; i < leaves.size(); ++i) vars.push_back(g.leaf(leaves[i], names[i], true));
      return g.value(b(g, vars)).item();
    };
    const double eps = 1e-5;
    for (size_t li = 0; li < theta_c_count; ++li)
      for (int k = 0; k < 5; ++k) {
        int64_t idx = static_cast<int64_t>(rng.below(static_cast<uint64_t>(leaves[li].size())));
        double saved = leaves[li][idx];
        leaves[li][idx] = saved + eps;
        double fp = eval(no_sim) - eval(sim_only);
        leaves[li][idx] = saved - eps;
        double fm = eval(no_sim) - eval(sim_only);
        leaves[li][idx] = saved;
        double numeric = (fp - fm) / (2.0 * eps);
        double a = analytic[li][idx];
        double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        worst = std::max(worst, rel);
      }
  }

  return {"end_to_end_dsn_probe", worst, threshold, worst < threshold};
}

}  // namespace

GradcheckReport run_gradcheck_suite(int inputs_per_loss, double fault_scale) {
  auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  SplitMix64 rng(0xC4EC);
  for (const LossCase& lc : loss_cases()) {
    double worst = 0.0;
    for (int i = 0; i < inputs_per_loss; ++i) {
      std::vector<Tensor> leaves;
      std::vector<std::string> names;
      LossBuilder build;
      lc.make(rng, leaves, names, build);
      double scale = (lc.name == "si_mse") ? fault_scale : 1.0;
      FdReport rep = finite_difference_check(build, leaves, names, 1e-5, nullptr, scale);
      worst = std::max(worst, rep.max_rel_err);
    }
    report.lines.push_back({lc.name, worst, lc.threshold, worst < lc.threshold});
  }
  report.lines.push_back(end_to_end_probe(1e-3));
  for (const auto& l : report.lines) report.all_pass = report.all_pass && l.pass;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

int cmd_gradcheck(bool quiet) {
  GradcheckReport rep = run_gradcheck_suite();
  if (!quiet) {
    for (const auto& l : rep.lines)
      std::printf("%-22s max rel err %.3e  (threshold %.0e)  %s\n", l.name.c_str(), l.max_rel_err, l.threshold,
                  l.pass ? "ok" : "FAIL");
    std::printf("gradient check %s in %.1f s\n", rep.all_pass ? "passed" : "FAILED", rep.seconds);
  }
  return rep.all_pass ? 0 : 3;
}

}  // namespace dsn
