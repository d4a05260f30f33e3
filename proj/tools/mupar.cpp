// mupar: config-driven runner for the width-scaling toolkit. Each subcommand
// parses one sectioned config file (plus --set overrides), dispatches to the
// library, and writes CSV/JSON outputs atomically under --output-dir.
//
// Exit codes: 0 success, 2 config error, 3 no viable hyperparameter point.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "mupar/config.hpp"
#include "mupar/coordcheck.hpp"
#include "mupar/csvio.hpp"
#include "mupar/primer.hpp"
#include "mupar/sweep.hpp"
#include "mupar/tasks.hpp"
#include "mupar/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mupar;

namespace {

// ---------------------------------------------------------------------------
// config plumbing

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
  std::string output_dir;
  int workers = -1;  // -1: not given on the command line
};

Config effective_config(const CommonOpts& opts, bool config_required) {
  Config cfg;
  if (!opts.config_path.empty()) {
    try {
      cfg = Config::load(opts.config_path);
    } catch (const std::runtime_error& e) {
      throw std::invalid_argument(e.what());
    }
  } else if (config_required) {
    throw std::invalid_argument("this subcommand needs --config");
  }
  for (const auto& ov : opts.overrides) cfg.set_dotted(ov);
  if (!opts.output_dir.empty()) cfg.set("run", "output_dir", opts.output_dir);
  if (opts.workers >= 0) cfg.set("run", "workers", std::to_string(opts.workers));
  return cfg;
}

const std::vector<std::string> kRunKeys = {"kind",    "seeds",  "workers",
                                           "metric",  "output_dir"};
const std::vector<std::string> kTaskKeys = {
    "family",        "scheme",        "d_in",          "d_out",         "base_width",
    "teacher_hidden", "activation",   "output_zero_init", "task_seed",  "data_seed",
    "val_batches",   "divergence_factor", "theta",     "d_model_base",  "d_head",
    "ffn_ratio",     "ln_position",   "alpha_output",  "alpha_attn",    "alpha_emb",
    "query_zero_init", "corpus_bytes", "corpus_seed"};
const std::vector<std::string> kOptimKeys = {"table"};
const std::vector<std::string> kHpKeys = {
    "schedule", "master_lr", "lr_input", "lr_hidden", "lr_output", "lr_scalar", "init_std",
    "alpha_output", "alpha_attn", "alpha_emb", "momentum", "beta1", "beta2", "eps"};
const std::vector<std::string> kScaleKeys = {"width", "depth", "batch", "seq_len", "steps",
                                             "sim_width"};

ConfigSchema task_run_schema() {
  ConfigSchema s;
  s.allow("run", kRunKeys);
  s.allow("task", kTaskKeys);
  s.allow("optim", kOptimKeys);
  s.allow("hp", kHpKeys);
  s.allow("search", {"master_lr", "lr_input", "lr_hidden", "lr_output", "lr_scalar", "init_std",
                     "alpha_output", "alpha_attn", "alpha_emb", "momentum", "beta1", "beta2",
                     "eps"});
  s.allow("scale", kScaleKeys);
  return s;
}

std::vector<uint64_t> run_seeds(const Config& cfg) {
  std::vector<uint64_t> seeds;
  if (cfg.has("run", "seeds"))
    for (int64_t s : cfg.get_int_list("run", "seeds")) seeds.push_back(uint64_t(s));
  else
    seeds = {1, 2, 3};
  if (seeds.empty()) throw std::invalid_argument("run.seeds must not be empty");
  return seeds;
}

SweepConfig run_sweep_config(const Config& cfg) {
  SweepConfig sc;
  sc.seeds = run_seeds(cfg);
  sc.workers = int(cfg.get_int("run", "workers", 0));
  return sc;
}

SelectMetric run_metric(const Config& cfg) {
  std::string m = cfg.get_str("run", "metric", "train");
  if (m == "train") return SelectMetric::train_loss;
  if (m == "val") return SelectMetric::val_loss;
  throw std::invalid_argument("run.metric must be train or val, got '" + m + "'");
}

OptimKind optim_table(const Config& cfg) {
  std::string t = cfg.get_str("optim", "table", "sgd");
  if (t == "sgd") return OptimKind::SGD;
  if (t == "adam") return OptimKind::Adam;
  throw std::invalid_argument("optim.table must be sgd or adam, got '" + t + "'");
}

TrialSetup task_setup(const Config& cfg) {
  std::string family = cfg.get_str("task", "family");
  Scheme scheme = scheme_from_string(cfg.get_str("task", "scheme", "mup-t3"));
  OptimKind table = optim_table(cfg);

  if (family == "teacher-mlp") {
    TeacherTaskSpec spec;
    spec.d_in = cfg.get_int("task", "d_in", spec.d_in);
    spec.d_out = cfg.get_int("task", "d_out", spec.d_out);
    spec.base_width = cfg.get_int("task", "base_width", spec.base_width);
    spec.teacher_hidden = cfg.get_int("task", "teacher_hidden", spec.teacher_hidden);
    std::string act = cfg.get_str("task", "activation", "relu");
    if (act == "relu")
      spec.activation = MlpConfig::Act::relu;
    else if (act == "tanh")
      spec.activation = MlpConfig::Act::tanh;
    else
      throw std::invalid_argument("task.activation must be relu or tanh, got '" + act + "'");
    spec.scheme = scheme;
    spec.table = table;
    spec.output_zero_init = cfg.get_bool("task", "output_zero_init", spec.output_zero_init);
    spec.task_seed = uint64_t(cfg.get_int("task", "task_seed", int64_t(spec.task_seed)));
    spec.data_seed = uint64_t(cfg.get_int("task", "data_seed", int64_t(spec.data_seed)));
    spec.val_batches = cfg.get_int("task", "val_batches", spec.val_batches);
    spec.divergence_factor = cfg.get_double("task", "divergence_factor", spec.divergence_factor);
    spec.theta = cfg.get_double("task", "theta", spec.theta);
    return teacher_mlp_setup(spec);
  }
  if (family == "char-lm") {
    LmTaskSpec spec;
    spec.d_model_base = cfg.get_int("task", "d_model_base", spec.d_model_base);
    spec.d_head = cfg.get_int("task", "d_head", spec.d_head);
    spec.ffn_ratio = cfg.get_int("task", "ffn_ratio", spec.ffn_ratio);
    std::string ln = cfg.get_str("task", "ln_position", "pre");
    if (ln == "pre")
      spec.ln_position = TransformerConfig::LnPos::pre;
    else if (ln == "post")
      spec.ln_position = TransformerConfig::LnPos::post;
    else
      throw std::invalid_argument("task.ln_position must be pre or post, got '" + ln + "'");
    spec.scheme = scheme;
    spec.table = table;
    spec.alpha_output = cfg.get_double("task", "alpha_output", spec.alpha_output);
    spec.alpha_attn = cfg.get_double("task", "alpha_attn", spec.alpha_attn);
    spec.alpha_emb = cfg.get_double("task", "alpha_emb", spec.alpha_emb);
    spec.output_zero_init = cfg.get_bool("task", "output_zero_init", spec.output_zero_init);
    spec.query_zero_init = cfg.get_bool("task", "query_zero_init", spec.query_zero_init);
    spec.corpus_bytes = size_t(cfg.get_int("task", "corpus_bytes", int64_t(spec.corpus_bytes)));
    spec.corpus_seed = uint64_t(cfg.get_int("task", "corpus_seed", int64_t(spec.corpus_seed)));
    spec.data_seed = uint64_t(cfg.get_int("task", "data_seed", int64_t(spec.data_seed)));
    spec.val_batches = cfg.get_int("task", "val_batches", spec.val_batches);
    spec.divergence_factor = cfg.get_double("task", "divergence_factor", spec.divergence_factor);
    return char_lm_setup(spec);
  }
  throw std::invalid_argument("task.family must be teacher-mlp or char-lm, got '" + family + "'");
}

HpPoint base_hp(const Config& cfg) {
  HpPoint hp;
  for (const auto& key : cfg.keys("hp")) {
    if (key == "schedule")
      hp.schedule = cfg.get_str("hp", "schedule");
    else
      hp.set(key, cfg.get_double("hp", key));
  }
  return hp;
}

std::vector<HpPoint> search_points(const Config& cfg, const HpPoint& base) {
  std::vector<std::pair<std::string, std::vector<double>>> axes;
  for (const auto& key : cfg.keys("search")) axes.push_back({key, cfg.get_double_list("search", key)});
  if (axes.empty()) throw std::invalid_argument("[search] must define at least one axis");
  std::vector<HpPoint> pts = SearchSpace::grid(axes).points();
  for (auto& p : pts) {
    HpPoint merged = base;
    for (const auto& [k, v] : p.values) merged.set(k, v);
    p = merged;
  }
  return pts;
}

ScalePoint scale_from(const Config& cfg, const std::string& section = "scale") {
  ScalePoint s;
  s.width = cfg.get_int(section, "width", s.width);
  s.depth = cfg.get_int(section, "depth", s.depth);
  s.batch = cfg.get_int(section, "batch", s.batch);
  s.seq_len = cfg.get_int(section, "seq_len", s.seq_len);
  s.steps = cfg.get_int(section, "steps", s.steps);
  s.sim_width = cfg.get_int(section, "sim_width", s.sim_width);
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// output plumbing

fs::path out_dir(const Config& cfg) {
  fs::path dir = cfg.get_str("run", "output_dir", ".");
  fs::create_directories(dir);
  return dir;
}

void write_out(const fs::path& dir, const std::string& name, const std::string& content) {
  atomic_write_file((dir / name).string(), content);
}

json hp_json(const HpPoint& hp) {
  json j;
  for (const auto& [k, v] : hp.values) j[k] = v;
  j["schedule"] = hp.schedule;
  return j;
}

json scale_json(const ScalePoint& s) {
  return json{{"width", s.width},     {"depth", s.depth}, {"batch", s.batch},
              {"seq_len", s.seq_len}, {"steps", s.steps}, {"sim_width", s.sim_width}};
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_coordcheck(const Config& cfg) {
  ConfigSchema schema = task_run_schema();
  schema.allow("coordcheck", {"widths", "steps", "tol", "batch", "feed_seed"});
  schema.check(cfg);

  TrialSetup setup = task_setup(cfg);
  HpPoint hp = base_hp(cfg);
  ScalePoint tmpl = scale_from(cfg);
  tmpl.batch = cfg.get_int("coordcheck", "batch", tmpl.batch);

  CoordCheckConfig cc;
  cc.widths = cfg.get_int_list("coordcheck", "widths");
  cc.steps = int(cfg.get_int("coordcheck", "steps", 4));
  cc.tol = cfg.get_double("coordcheck", "tol", 0.2);
  cc.seeds = run_seeds(cfg);
  cc.opt = hp_optimizer(setup, hp, tmpl);

  ModelFamily family = [&](int64_t width, uint64_t seed) {
    ScalePoint s = tmpl;
    s.width = width;
    return setup.build(hp, s, seed);
  };
  uint64_t feed_seed = uint64_t(cfg.get_int("coordcheck", "feed_seed", 1));
  BatchFn batches = setup.train_data(tmpl, feed_seed);

  CoordCheckReport rep = run_coord_check(family, cc, batches);

  fs::path dir = out_dir(cfg);
  write_out(dir, "coordcheck.csv", coordcheck_csv(rep));
  write_out(dir, "coordcheck_report.json", coordcheck_json(rep));
  write_out(dir, "run_config.cfg", cfg.serialize());

  std::printf("coordcheck: %s\n", rep.verdicts.pass ? "pass" : "fail");
  for (const auto& a : rep.verdicts.per_activation)
    std::printf("  %-16s %-7s worst slope %+.3f (step %d)\n", a.activation.c_str(),
                to_string(a.label), a.worst_slope, a.step);
  return 0;
}

int cmd_sweep(const Config& cfg) {
  ConfigSchema schema = task_run_schema();
  schema.check(cfg);

  TrialSetup setup = task_setup(cfg);
  std::vector<HpPoint> pts = search_points(cfg, base_hp(cfg));
  ScalePoint scale = scale_from(cfg);
  SweepConfig sc = run_sweep_config(cfg);

  std::vector<SweepRecord> records = sweep(setup, pts, scale, sc);

  fs::path dir = out_dir(cfg);
  write_out(dir, "sweep.csv", sweep_csv(records));
  write_out(dir, "lr_loss.csv", lr_loss_csv(records));
  write_out(dir, "run_config.cfg", cfg.serialize());

  Selection sel = select_best(records, run_metric(cfg));  // may exit 3 via NoViableHp
  json j;
  j["hp"] = hp_json(sel.hp);
  j["mean_loss"] = sel.mean_loss;
  j["n_seeds"] = sel.n_seeds;
  j["metric"] = cfg.get_str("run", "metric", "train");
  write_out(dir, "selection.json", j.dump(2) + "\n");

  std::printf("sweep: %zu points x %zu seeds, best master_lr=%g mean_loss=%g\n", pts.size(),
              sc.seeds.size(), sel.hp.lr(), sel.mean_loss);
  return 0;
}

int cmd_transfer(const Config& cfg) {
  ConfigSchema schema = task_run_schema();
  schema.allow("transfer", {"target_width", "target_depth", "target_batch", "target_seq_len",
                            "target_steps", "target_sim_width"});
  schema.check(cfg);

  TrialSetup setup = task_setup(cfg);
  std::vector<HpPoint> pts = search_points(cfg, base_hp(cfg));
  ScalePoint proxy = scale_from(cfg);
  SweepConfig sc = run_sweep_config(cfg);

  ScalePoint target = proxy;
  target.width = cfg.get_int("transfer", "target_width");
  target.depth = cfg.get_int("transfer", "target_depth", proxy.depth);
  target.batch = cfg.get_int("transfer", "target_batch", proxy.batch);
  target.seq_len = cfg.get_int("transfer", "target_seq_len", proxy.seq_len);
  target.steps = cfg.get_int("transfer", "target_steps", proxy.steps);
  target.sim_width = cfg.get_int("transfer", "target_sim_width", proxy.sim_width);
  target.validate();

  std::vector<SweepRecord> proxy_records = sweep(setup, pts, proxy, sc);
  fs::path dir = out_dir(cfg);
  write_out(dir, "proxy_sweep.csv", sweep_csv(proxy_records));
  write_out(dir, "proxy_lr_loss.csv", lr_loss_csv(proxy_records));
  write_out(dir, "run_config.cfg", cfg.serialize());

  Selection best = select_best(proxy_records, run_metric(cfg));
  TransferReport rep = mu_transfer(setup, best.hp, proxy, target, sc);

  write_out(dir, "target_sweep.csv", sweep_csv(rep.target_records));
  write_out(dir, "transfer_report.json", transfer_json(rep) + "\n");

  std::printf("transfer: proxy width %lld -> target width %lld, master_lr=%g, target mean loss %g%s\n",
              (long long)proxy.width, (long long)target.width, best.hp.lr(), rep.target_mean_loss,
              rep.naive_mode ? " [naive mode]" : "");
  for (const auto& w : rep.warnings) std::printf("  warning: %s\n", w.c_str());
  return 0;
}

int cmd_widthscan(const Config& cfg) {
  ConfigSchema schema = task_run_schema();
  schema.allow("widthscan", {"widths", "band", "checkpoints"});
  schema.check(cfg);

  TrialSetup setup = task_setup(cfg);
  HpPoint hp = base_hp(cfg);
  ScalePoint scale = scale_from(cfg);
  SweepConfig sc = run_sweep_config(cfg);

  std::vector<int64_t> widths = cfg.get_int_list("widthscan", "widths");
  double band = cfg.get_double("widthscan", "band", 0.02);
  std::vector<int64_t> checkpoints;
  if (cfg.has("widthscan", "checkpoints")) checkpoints = cfg.get_int_list("widthscan", "checkpoints");

  WiderReport rep = wider_is_better_scan(setup, hp, widths, scale, sc, checkpoints, band);

  std::string csv = "checkpoint_step,width,mean_loss\n";
  char buf[96];
  for (size_t c = 0; c < rep.checkpoint_steps.size(); ++c)
    for (size_t w = 0; w < rep.widths.size(); ++w) {
      std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g\n", (long long)rep.checkpoint_steps[c],
                    (long long)rep.widths[w], rep.mean_loss[c][w]);
      csv += buf;
    }

  json j;
  j["widths"] = rep.widths;
  j["checkpoint_steps"] = rep.checkpoint_steps;
  j["band"] = rep.band;
  j["mean_loss"] = rep.mean_loss;
  j["violations"] = rep.violations;
  j["diverged_widths"] = rep.diverged_widths;
  j["hp"] = hp_json(hp);

  fs::path dir = out_dir(cfg);
  write_out(dir, "widthscan.csv", csv);
  write_out(dir, "widthscan.json", j.dump(2) + "\n");
  write_out(dir, "run_config.cfg", cfg.serialize());

  int final_violations = rep.violations.empty() ? 0 : rep.violations.back();
  std::printf("widthscan: %zu widths, final-checkpoint violations %d\n", rep.widths.size(),
              final_violations);
  return 0;
}

int cmd_reverse(const Config& cfg) {
  ConfigSchema schema = task_run_schema();
  schema.allow("reverse", {"from_sim_width", "to_sim_width", "optimum_loss"});
  schema.check(cfg);

  TrialSetup setup = task_setup(cfg);
  HpPoint hp = base_hp(cfg);
  ScalePoint from = scale_from(cfg);
  from.sim_width = cfg.get_int("reverse", "from_sim_width");
  ScalePoint to = from;
  to.sim_width = cfg.get_int("reverse", "to_sim_width");
  SweepConfig sc = run_sweep_config(cfg);
  double optimum = cfg.get_double("reverse", "optimum_loss",
                                  std::numeric_limits<double>::quiet_NaN());

  ReverseReport rep = reverse_transfer(setup, hp, from, to, sc, optimum);

  json j;
  j["hp"] = hp_json(rep.hp);
  j["from"] = scale_json(rep.from);
  j["to"] = scale_json(rep.to);
  j["from_diverged"] = rep.from_diverged;
  j["to_diverged"] = rep.to_diverged;
  j["n_seeds"] = sc.seeds.size();
  if (std::isfinite(rep.to_mean_loss)) j["to_mean_loss"] = rep.to_mean_loss;
  if (std::isfinite(rep.optimum_loss)) j["optimum_loss"] = rep.optimum_loss;
  j["replicated"] = rep.replicated;

  fs::path dir = out_dir(cfg);
  write_out(dir, "from_sweep.csv", sweep_csv(rep.from_records));
  write_out(dir, "to_sweep.csv", sweep_csv(rep.to_records));
  write_out(dir, "reverse_report.json", j.dump(2) + "\n");
  write_out(dir, "run_config.cfg", cfg.serialize());

  std::printf("reverse: sim %lld -> %lld, diverged %d/%zu -> %d/%zu, replicated: %s\n",
              (long long)from.sim_width, (long long)to.sim_width, rep.from_diverged,
              sc.seeds.size(), rep.to_diverged, sc.seeds.size(), rep.replicated ? "yes" : "no");
  return 0;
}

int cmd_primer(const Config& cfg, const std::string& n_flag) {
  ConfigSchema schema;
  schema.allow("run", kRunKeys);
  schema.allow("primer",
               {"fn", "n", "alpha_lo", "alpha_hi", "alpha_step", "samples", "c_rest", "seed"});
  schema.check(cfg);

  std::string fn = cfg.get_str("primer", "fn", "neg_gauss_bump");
  std::vector<int64_t> ns;
  if (!n_flag.empty()) {
    Config tmp;
    tmp.set("x", "n", n_flag);
    ns = tmp.get_int_list("x", "n");
  } else if (cfg.has("primer", "n")) {
    ns = cfg.get_int_list("primer", "n");
  } else {
    ns = {64, 256, 1024};
  }
  double lo = cfg.get_double("primer", "alpha_lo", 0.0);
  double hi = cfg.get_double("primer", "alpha_hi", 4.0);
  double step = cfg.get_double("primer", "alpha_step", 0.125);
  int64_t samples = cfg.get_int("primer", "samples", 40000);
  double c_rest = cfg.get_double("primer", "c_rest", 0.0);
  uint64_t seed = uint64_t(cfg.get_int("primer", "seed", 1));
  if (!(hi > lo) || !(step > 0)) throw std::invalid_argument("primer: need alpha_hi > alpha_lo and alpha_step > 0");

  std::vector<double> alphas;
  for (double a = lo; a <= hi + 1e-12; a += step) alphas.push_back(a);

  std::string csv = "n,alpha_star,min_value,flat\n";
  std::string scan_csv = "n,alpha,value\n";
  char buf[128];
  SeededRng rng(seed);
  for (int64_t n : ns) {
    PrimerScan scan = primer_argmin(n, alphas, fn, samples, rng.fork(uint64_t(n)), c_rest);
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%d\n", (long long)n, scan.alpha_star,
                  scan.flat ? 0.0 : scan.values[scan.star_index], scan.flat ? 1 : 0);
    csv += buf;
    for (size_t i = 0; i < scan.alphas.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", (long long)n, scan.alphas[i],
                    scan.values[i]);
      scan_csv += buf;
    }
    std::printf("primer: n=%-6lld alpha*=%s\n", (long long)n,
                scan.flat ? "flat" : std::to_string(scan.alpha_star).c_str());
  }

  fs::path dir = out_dir(cfg);
  write_out(dir, "primer.csv", csv);
  write_out(dir, "primer_scan.csv", scan_csv);
  write_out(dir, "run_config.cfg", cfg.serialize());
  return 0;
}

int cmd_lawcheck(const Config& cfg) {
  ConfigSchema schema;
  schema.allow("run", kRunKeys);
  schema.allow("lawcheck", {"kinds", "n", "reps", "correlated", "seed"});
  schema.check(cfg);

  std::vector<std::string> kinds;
  {
    std::string raw =
        cfg.get_str("lawcheck", "kinds", "gaussian,tensor_product,nonlinear_tensor_product,vector");
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) kinds.push_back(detail::trim(item));
  }
  std::vector<int64_t> ns = cfg.has("lawcheck", "n") ? cfg.get_int_list("lawcheck", "n")
                                                     : std::vector<int64_t>{64, 128, 256, 512, 1024};
  int reps = int(cfg.get_int("lawcheck", "reps", 50));
  bool correlated = cfg.get_bool("lawcheck", "correlated", false);
  uint64_t seed = uint64_t(cfg.get_int("lawcheck", "seed", 1));

  auto kind_of = [](const std::string& k) {
    if (k == "gaussian") return MatrixKind::gaussian;
    if (k == "tensor_product") return MatrixKind::tensor_product;
    if (k == "nonlinear_tensor_product") return MatrixKind::nonlinear_tensor_product;
    if (k == "vector") return MatrixKind::vector;
    throw std::invalid_argument("lawcheck: unknown kind '" + k + "'");
  };

  std::string csv = "kind,n,entry_size\n";
  char buf[128];
  json slopes = json::array();
  for (const auto& kname : kinds) {
    EntrySizeResult res =
        entry_size_law_check(kind_of(kname), ns, correlated, SeededRng(seed).fork(kname), reps);
    for (const auto& [n, size] : res.sizes) {
      std::snprintf(buf, sizeof buf, "%s,%lld,%.17g\n", kname.c_str(), (long long)n, size);
      csv += buf;
    }
    slopes.push_back(json{{"kind", kname},
                          {"correlated", correlated},
                          {"slope", res.fit.slope},
                          {"intercept", res.fit.intercept}});
    std::printf("lawcheck: %-26s slope %+.3f\n", kname.c_str(), res.fit.slope);
  }

  fs::path dir = out_dir(cfg);
  write_out(dir, "lawcheck.csv", csv);
  write_out(dir, "lawcheck.json", slopes.dump(2) + "\n");
  write_out(dir, "run_config.cfg", cfg.serialize());
  return 0;
}

void add_common(CLI::App* sub, CommonOpts& opts, bool config_required) {
  auto* c = sub->add_option("--config", opts.config_path, "sectioned key-value config file");
  if (config_required) c->required();
  sub->add_option("--set", opts.overrides, "override a config value, section.key=value")
      ->take_all();
  sub->add_option("--output-dir", opts.output_dir, "directory for emitted files");
  sub->add_option("--workers", opts.workers, "max concurrent trials (0: MUPAR_WORKERS or 1)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"width-scaling toolkit: parametrization checks, sweeps, and transfer runs"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string primer_n;

  CLI::App* c_coord = app.add_subcommand("coordcheck", "activation scaling check over a width ladder");
  CLI::App* c_sweep = app.add_subcommand("sweep", "hyperparameter grid sweep at one scale");
  CLI::App* c_transfer = app.add_subcommand("transfer", "tune on a proxy scale, rerun best on a target");
  CLI::App* c_width = app.add_subcommand("widthscan", "fixed-hp monotonicity scan across widths");
  CLI::App* c_reverse = app.add_subcommand("reverse", "replicate simulated-width divergence at a smaller sim");
  CLI::App* c_primer = app.add_subcommand("primer", "toy expected-loss scans for sums of sign coordinates");
  CLI::App* c_law = app.add_subcommand("lawcheck", "entry-size laws for structured random matrices");

  add_common(c_coord, opts, true);
  add_common(c_sweep, opts, true);
  add_common(c_transfer, opts, true);
  add_common(c_width, opts, true);
  add_common(c_reverse, opts, true);
  add_common(c_primer, opts, false);
  add_common(c_law, opts, false);
  c_primer->add_option("--n", primer_n, "comma list of coordinate counts, overrides primer.n");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    bool needs_config = !(c_primer->parsed() || c_law->parsed());
    Config cfg = effective_config(opts, needs_config);
    std::string sub = app.get_subcommands().front()->get_name();
    std::string kind = cfg.get_str("run", "kind", sub);
    if (kind != sub)
      throw std::invalid_argument("run.kind is '" + kind + "' but the subcommand is '" + sub + "'");
    if (c_coord->parsed()) return cmd_coordcheck(cfg);
    if (c_sweep->parsed()) return cmd_sweep(cfg);
    if (c_transfer->parsed()) return cmd_transfer(cfg);
    if (c_width->parsed()) return cmd_widthscan(cfg);
    if (c_reverse->parsed()) return cmd_reverse(cfg);
    if (c_primer->parsed()) return cmd_primer(cfg, primer_n);
    if (c_law->parsed()) return cmd_lawcheck(cfg);
  } catch (const NoViableHp& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
