#include "tabdpt/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tabdpt/contam_check.hpp"
#include "tabdpt/digest.hpp"
#include "tabdpt/evalharness.hpp"
#include "tabdpt/infer.hpp"
#include "tabdpt/scalefit.hpp"
#include "tabdpt/trainer.hpp"

namespace tabdpt::cli {

namespace fs = std::filesystem;
using Config = std::map<std::string, std::string>;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

const std::map<std::string, Config>& all_defaults() {
  static const Config common = {{"out_dir", ""}, {"seed", "0"}, {"workers", "1"}};
  static const Config model = {{"layers", "3"},        {"dim", "32"},
                               {"heads", "4"},         {"ffn_factor", "2"},
                               {"c_max", "10"},        {"f_max", "100"},
                               {"lr", "5e-4"},         {"weight_decay", "5e-2"},
                               {"label_smoothing", "0.1"}, {"batch_size", "16"},
                               {"context_rows", "64"}, {"steps", "1000"},
                               {"task_balance", "equal"}, {"ssl", "true"},
                               {"eval_every", "0"},    {"eval_episodes", "64"},
                               {"corpus", ""},         {"eval_corpus", ""},
                               {"target", ""},         {"resume", ""}};
  static const Config predict = {{"checkpoint", ""}, {"train_table", ""}, {"test_table", ""}, {"target", ""},
                                 {"target_kind", "auto"}, {"context_size", "2048"}, {"ensembles", "8"}};
  static const std::map<std::string, Config> table = [&] {
    std::map<std::string, Config> t;
    auto with = [&](Config extra) {
      extra.insert(common.begin(), common.end());
      return extra;
    };
    t["ingest"] = with({{"inputs", ""}, {"target", ""}, {"target_kind", "auto"}});
    t["train"] = with(model);
    t["predict"] = with(predict);
    Config few = predict;
    few["pool_table"] = "";
    few["pseudo_count"] = "1000";
    t["fewshot"] = with(few);
    t["eval"] = with({{"scores", ""}, {"bootstrap_iters", "1000"}, {"elo_permutations", "100"}});
    t["scaling-fit"] = with({{"points", ""}, {"huber_delta", "1e-3"}});
    t["contam-check"] = with({{"train_tables", ""}, {"eval_tables", ""}, {"target", ""},
                              {"tolerance", "1e-3"}, {"flag_fraction", "0.8"}});
    return t;
  }();
  return table;
}

struct Values {
  const Config& c;

  const std::string& str(const std::string& key) const { return c.at(key); }
  std::string required(const std::string& key) const {
    const auto& v = c.at(key);
    if (v.empty()) throw config_error("missing required key '" + key + "'");
    return v;
  }
  std::size_t size(const std::string& key) const {
    const auto& v = c.at(key);
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      x = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw config_error("key '" + key + "' needs a non-negative integer, got '" + v + "'");
    return static_cast<std::size_t>(x);
  }
  double real(const std::string& key) const {
    const auto& v = c.at(key);
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size() || !std::isfinite(x))
      throw config_error("key '" + key + "' needs a finite number, got '" + v + "'");
    return x;
  }
  bool boolean(const std::string& key) const {
    const auto& v = c.at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw config_error("key '" + key + "' needs true or false, got '" + v + "'");
  }
  std::optional<std::string> opt(const std::string& key) const {
    const auto& v = c.at(key);
    return v.empty() ? std::nullopt : std::optional<std::string>(v);
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw data_error("cannot open " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Output files of one run. Written atomically; all of them are removed if the run fails.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    const fs::path tmp = dir_ / (name + ".partial");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw data_error("cannot write " + tmp.string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw data_error("write failure on " + tmp.string());
    }
    fs::rename(tmp, p);
    record(name);
  }

  // For files produced by library writers (tables, checkpoints).
  fs::path reserve(const std::string& name) {
    record(name);
    return dir_ / name;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& n : names_) {
      fs::remove(dir_ / n, ec);
      fs::remove(dir_ / (n + ".partial"), ec);
    }
    names_.clear();
  }

  const std::vector<std::string>& names() const { return names_; }
  const fs::path& dir() const { return dir_; }

 private:
  void record(const std::string& name) {
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  }
  fs::path dir_;
  std::vector<std::string> names_;
};

struct RunContext {
  const Values& v;
  Outputs& outputs;
  std::vector<fs::path> inputs;
  std::size_t processed_rows = 0;  // rows behind the per-1000-row timing
};

bool is_table_file(const fs::path& p) { return p.extension() == ".tbl"; }

void check_exists(const std::vector<std::string>& paths) {
  for (const auto& p : paths)
    if (!fs::is_regular_file(p)) throw data_error("input file not found: " + p);
}

PrepareOptions prepare_options(const Values& v) {
  const auto& kind = v.str("target_kind");
  PrepareOptions po;
  if (kind != "auto") po.target_kind = parse_task_kind(kind);
  return po;
}

// A CSV is prepared on the fly, a .tbl file is loaded as is.
PreparedTable load_prepared(const std::string& path, const std::optional<std::string>& target, const PrepareOptions& po) {
  if (is_table_file(path)) return load_table(path);
  return prepare(load_csv(path, target), po);
}

// Test rows in the feature space of `fitted`.
PreparedTable load_aligned(const PreparedTable& fitted, const std::string& path, const std::optional<std::string>& target) {
  if (is_table_file(path)) return load_table(path);
  return transform(fitted, load_csv(path, target));
}

ModelConfig model_config(const Values& v) {
  ModelConfig m;
  m.num_layers = v.size("layers");
  m.dim = v.size("dim");
  m.num_heads = v.size("heads");
  m.ffn_factor = v.size("ffn_factor");
  m.c_max = v.size("c_max");
  m.f_max = v.size("f_max");
  m.validate();
  return m;
}

TrainConfig train_config(const Values& v) {
  TrainConfig t;
  t.learning_rate = v.real("lr");
  t.weight_decay = v.real("weight_decay");
  t.label_smoothing = v.real("label_smoothing");
  t.batch_size = v.size("batch_size");
  t.K = v.size("context_rows");
  t.steps = v.size("steps");
  t.seed = v.size("seed");
  const auto& bal = v.str("task_balance");
  if (bal == "equal")
    t.task_balance = TaskBalance::equal;
  else if (bal == "code")
    t.task_balance = TaskBalance::code;
  else
    throw config_error("task_balance must be 'equal' or 'code'");
  t.ssl = v.boolean("ssl");
  t.eval_every = v.size("eval_every");
  t.eval_episodes = v.size("eval_episodes");
  t.validate();
  return t;
}

InferOptions infer_options(const Values& v) {
  InferOptions o;
  o.context_size = v.size("context_size");
  o.ensembles = v.size("ensembles");
  o.seed = v.size("seed");
  o.validate();
  return o;
}

std::string format_predictions(const Prediction& p) {
  std::ostringstream os;
  os.precision(9);
  if (p.kind == TaskKind::regression) {
    os << "row_id,prediction\n";
    for (std::size_t i = 0; i < p.values.size(); ++i) os << i << ',' << p.values[i] << '\n';
    return os.str();
  }
  os << "row_id";
  for (Eigen::Index c = 0; c < p.probs.cols(); ++c) os << ",p_" << c;
  os << '\n';
  for (Eigen::Index i = 0; i < p.probs.rows(); ++i) {
    os << i;
    for (Eigen::Index c = 0; c < p.probs.cols(); ++c) os << ',' << p.probs(i, c);
    os << '\n';
  }
  return os.str();
}

// Metrics on test rows with a known target, as `method,dataset,metric,value`.
std::optional<std::string> format_metrics(const Prediction& p, const PreparedTable& test, const std::string& dataset) {
  if (!test.target_col) return std::nullopt;
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < test.target_values.size(); ++r)
    if (!std::isnan(test.target_values[r])) rows.push_back(r);
  if (rows.empty()) return std::nullopt;
  Metrics m;
  if (p.kind == TaskKind::classification) {
    MatrixXdR probs(static_cast<Eigen::Index>(rows.size()), p.probs.cols());
    std::vector<std::size_t> y;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      probs.row(static_cast<Eigen::Index>(i)) = p.probs.row(static_cast<Eigen::Index>(rows[i]));
      y.push_back(static_cast<std::size_t>(test.target_values[rows[i]]));
    }
    m = classification_metrics(probs, y);
  } else {
    std::vector<double> pred, y;
    for (auto r : rows) {
      pred.push_back(p.values[r]);
      y.push_back(test.target_values[r]);
    }
    m = regression_metrics(pred, y);
  }
  std::ostringstream os;
  os.precision(17);
  os << "method,dataset,metric,value\n";
  auto emit = [&](const char* name, const std::optional<double>& x) {
    if (x) os << "tabdpt," << dataset << ',' << name << ',' << *x << '\n';
  };
  emit("accuracy", m.accuracy);
  emit("auc", m.auc);
  emit("correlation", m.correlation);
  emit("r2", m.r2);
  return os.str();
}

std::string table_stem(const std::string& path) { return fs::path(path).stem().string(); }

void cmd_ingest(RunContext& ctx) {
  const auto inputs = split_list(ctx.v.required("inputs"));
  check_exists(inputs);
  const auto target = ctx.v.opt("target");
  const auto po = prepare_options(ctx.v);
  std::vector<std::string> stems;
  for (const auto& in : inputs) {
    const auto stem = table_stem(in);
    if (std::find(stems.begin(), stems.end(), stem) != stems.end())
      throw config_error("two inputs share the output name '" + stem + "'");
    stems.push_back(stem);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ctx.inputs.emplace_back(inputs[i]);
    const auto table = prepare(load_csv(inputs[i], target), po);
    ctx.processed_rows += table.n_rows();
    save_table(table, ctx.outputs.reserve(stems[i] + ".tbl"));
  }
}

Corpus load_corpus(const std::vector<std::string>& paths, const std::optional<std::string>& target, RunContext& ctx) {
  Corpus corpus;
  for (const auto& p : paths) {
    ctx.inputs.emplace_back(p);
    auto table = load_prepared(p, target, {});
    ctx.processed_rows += table.n_rows();
    corpus.push_back(make_corpus_entry(std::move(table)));
  }
  return corpus;
}

void cmd_train(RunContext& ctx) {
  const auto paths = split_list(ctx.v.required("corpus"));
  const auto eval_paths = split_list(ctx.v.str("eval_corpus"));
  check_exists(paths);
  check_exists(eval_paths);
  const auto resume_path = ctx.v.opt("resume");
  if (resume_path) check_exists({*resume_path});
  const ModelConfig model = model_config(ctx.v);
  TrainConfig cfg = train_config(ctx.v);
  const auto target = ctx.v.opt("target");

  const Corpus corpus = load_corpus(paths, target, ctx);
  const Corpus eval_corpus = load_corpus(eval_paths, target, ctx);
  ctx.processed_rows = cfg.steps * cfg.batch_size * cfg.K;
  const Corpus* eval_ptr = eval_corpus.empty() ? nullptr : &eval_corpus;

  TrainResult result;
  if (resume_path) {
    ctx.inputs.emplace_back(*resume_path);
    Checkpoint ckpt = load_checkpoint(*resume_path);
    if (!(ckpt.config == model)) throw config_error("resume: checkpoint model config differs from the requested one");
    result = resume(std::move(ckpt), corpus, cfg, eval_ptr);
  } else {
    result = train(corpus, model, cfg, eval_ptr);
  }
  save_checkpoint(result.checkpoint, ctx.outputs.reserve("model.ckpt"));
  ctx.outputs.write("loss_log.csv", format_loss_log(result.log));
}

void cmd_predict(RunContext& ctx) {
  const auto ckpt_path = ctx.v.required("checkpoint");
  const auto train_path = ctx.v.required("train_table");
  const auto test_path = ctx.v.required("test_table");
  check_exists({ckpt_path, train_path, test_path});
  const auto opts = infer_options(ctx.v);
  const auto target = ctx.v.opt("target");
  ctx.inputs = {ckpt_path, train_path, test_path};

  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PreparedTable train = load_prepared(train_path, target, prepare_options(ctx.v));
  if (!train.target_col) throw config_error("predict: training table has no target column (set 'target')");
  const PreparedTable test = load_aligned(train, test_path, target);
  const SupervisedView view = supervised_view(train);
  const Prediction p = predict(ckpt.params, view, feature_matrix(test), opts);
  ctx.processed_rows = test.n_rows();
  ctx.outputs.write("predictions.csv", format_predictions(p));
  if (auto m = format_metrics(p, test, table_stem(test_path))) ctx.outputs.write("metrics.csv", *m);
}

void cmd_fewshot(RunContext& ctx) {
  const auto ckpt_path = ctx.v.required("checkpoint");
  const auto shots_path = ctx.v.required("train_table");
  const auto pool_path = ctx.v.required("pool_table");
  const auto test_path = ctx.v.required("test_table");
  check_exists({ckpt_path, shots_path, pool_path, test_path});
  const auto opts = infer_options(ctx.v);
  const auto pseudo = ctx.v.size("pseudo_count");
  const auto target = ctx.v.opt("target");
  ctx.inputs = {ckpt_path, shots_path, pool_path, test_path};

  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const PreparedTable shots = load_prepared(shots_path, target, prepare_options(ctx.v));
  if (!shots.target_col) throw config_error("fewshot: shot table has no target column (set 'target')");
  const PreparedTable pool = load_aligned(shots, pool_path, target);
  const PreparedTable test = load_aligned(shots, test_path, target);
  const auto r = fewshot_predict(ckpt.params, supervised_view(shots), feature_matrix(pool), feature_matrix(test), opts, pseudo);
  ctx.processed_rows = pool.n_rows() + test.n_rows();
  ctx.outputs.write("predictions_stage1.csv", format_predictions(r.stage1));
  ctx.outputs.write("predictions.csv", format_predictions(r.final));
  const auto dataset = table_stem(test_path);
  if (auto m = format_metrics(r.stage1, test, dataset)) ctx.outputs.write("metrics_stage1.csv", *m);
  if (auto m = format_metrics(r.final, test, dataset)) ctx.outputs.write("metrics.csv", *m);
}

void cmd_eval(RunContext& ctx) {
  const auto path = ctx.v.required("scores");
  check_exists({path});
  const auto iters = ctx.v.size("bootstrap_iters");
  const auto perms = ctx.v.size("elo_permutations");
  const auto seed = ctx.v.size("seed");
  ctx.inputs = {path};
  const auto tables = parse_score_csv(read_file(path));
  if (tables.empty()) throw data_error("eval: score table is empty");
  std::string ranks = "metric,kind,method,estimate,ci_lo,ci_hi\n", iqms = ranks, elo = ranks;
  std::string wins = "metric,method,opponent,win_rate\n", glicko = "metric,method,rating,rd,volatility\n";
  auto body = [](const std::string& csv) { return csv.substr(csv.find('\n') + 1); };
  for (const auto& [metric, t] : tables) {
    ctx.processed_rows += t.methods.size() * t.datasets.size();
    ranks += body(format_intervals_csv(metric, "rank", average_ranks(t, iters, seed)));
    std::vector<IntervalEstimate> iq;
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
      std::vector<double> s;
      for (std::size_t d = 0; d < t.datasets.size(); ++d)
        if (!std::isnan(t.at(m, d))) s.push_back(t.at(m, d));
      if (s.size() < 4) continue;
      auto e = iqm(s, iters, seed);
      e.name = t.methods[m];
      iq.push_back(e);
    }
    iqms += body(format_intervals_csv(metric, "iqm", iq));
    wins += body(format_win_rate_csv(t, win_rate_matrix(t)));
    elo += body(format_intervals_csv(metric, "elo", elo_ratings(t, perms, seed)));
    glicko += body(format_glicko_csv(t, glicko2_ratings(t)));
  }
  ctx.outputs.write("ranks.csv", ranks);
  ctx.outputs.write("iqm.csv", iqms);
  ctx.outputs.write("win_rates.csv", wins);
  ctx.outputs.write("elo.csv", elo);
  ctx.outputs.write("glicko2.csv", glicko);
}

void cmd_scaling_fit(RunContext& ctx) {
  const auto path = ctx.v.required("points");
  check_exists({path});
  PowerLawOptions po;
  po.huber_delta = ctx.v.real("huber_delta");
  if (!(po.huber_delta > 0.0)) throw config_error("huber_delta must be positive");
  ctx.inputs = {path};
  const auto points = parse_scaling_csv(read_file(path));
  const auto fit = fit_power_law(points, po);
  ctx.processed_rows = points.size();
  ctx.outputs.write("fit.csv", format_fit_csv(fit));
  ctx.outputs.write("excess.csv", format_excess_csv(fit, points));
}

void cmd_contam_check(RunContext& ctx) {
  const auto train_paths = split_list(ctx.v.required("train_tables"));
  const auto eval_paths = split_list(ctx.v.required("eval_tables"));
  check_exists(train_paths);
  check_exists(eval_paths);
  CompareOptions co;
  co.tolerance = ctx.v.real("tolerance");
  co.flag_fraction = ctx.v.real("flag_fraction");
  const auto workers = ctx.v.size("workers");
  const auto target = ctx.v.opt("target");
  auto load_all = [&](const std::vector<std::string>& paths) {
    std::vector<RawTable> raws;
    for (const auto& p : paths) {
      ctx.inputs.emplace_back(p);
      // The target name is optional per table: tables without that column get no target.
      auto raw = load_csv(p);
      if (target) raw.target = raw.column_index(*target);
      ctx.processed_rows += raw.n_rows;
      raws.push_back(std::move(raw));
    }
    return fingerprint_all(raws, workers);
  };
  const auto train = load_all(train_paths);
  const auto eval = load_all(eval_paths);
  ctx.outputs.write("contamination.csv", format_report_csv(compare_all(train, eval, co)));
}

using Command = void (*)(RunContext&);

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> m = {
      {"ingest", cmd_ingest},   {"train", cmd_train}, {"predict", cmd_predict},           {"fewshot", cmd_fewshot},
      {"eval", cmd_eval},       {"scaling-fit", cmd_scaling_fit}, {"contam-check", cmd_contam_check}};
  return m;
}

std::string kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
  }
  return "data";
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::data: return kExitData;
    case ErrorKind::numeric: return kExitNumeric;
  }
  return kExitData;
}

std::map<std::string, std::string> parse_config(const std::string& text) {
  Config out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second)
      throw config_error("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return out;
}

const std::map<std::string, std::string>& default_config(const std::string& subcommand) {
  const auto& all = all_defaults();
  const auto it = all.find(subcommand);
  if (it == all.end()) throw config_error("unknown subcommand '" + subcommand + "'");
  return it->second;
}

std::map<std::string, std::string> resolve_config(const std::string& subcommand, const Config& file_values,
                                                  const Config& overrides) {
  Config out = default_config(subcommand);
  for (const auto* src : {&file_values, &overrides})
    for (const auto& [k, val] : *src) {
      const auto it = out.find(k);
      if (it == out.end()) throw config_error("unknown key '" + k + "' for " + subcommand);
      it->second = val;
    }
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular in-context learning toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  for (const auto& [name, fn] : commands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "flat key = value config file");
    sub->add_option("-s,--set", sets, "override, key=value (repeatable)");
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error[config]: " << one_line(e.what()) << '\n';
    return kExitConfig;
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  std::unique_ptr<Outputs> outputs;
  try {
    Config file_values;
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) throw config_error("config file not found: " + config_path);
      file_values = parse_config(read_file(config_path));
    }
    Config overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw config_error("--set expects key=value, got '" + s + "'");
      overrides[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    const Config cfg = resolve_config(sub, file_values, overrides);
    const Values v{cfg};
    const fs::path out_dir = v.required("out_dir");
    (void)v.size("seed");
    if (v.size("workers") == 0) throw config_error("workers must be at least 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) throw config_error("cannot create out_dir " + out_dir.string());

    outputs = std::make_unique<Outputs>(out_dir);
    RunContext ctx{v, *outputs, {}, 0};
    const auto t0 = std::chrono::steady_clock::now();
    commands().at(sub)(ctx);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::ordered_json manifest;
    manifest["subcommand"] = sub;
    manifest["seed"] = v.size("seed");
    manifest["config"] = nlohmann::ordered_json(cfg);
    std::string reexec = "tabdpt " + sub;
    for (const auto& [k, val] : cfg) reexec += " --set '" + k + "=" + val + "'";
    manifest["command"] = reexec;
    auto& ins = manifest["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : ctx.inputs) ins.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    auto& outs = manifest["outputs"] = nlohmann::ordered_json::array();
    for (const auto& n : outputs->names()) outs.push_back({{"path", n}, {"sha256", sha256_file(out_dir / n)}});
    manifest["timing"] = {{"seconds", seconds},
                          {"rows", ctx.processed_rows},
                          {"seconds_per_1000_rows",
                           ctx.processed_rows ? seconds * 1000.0 / static_cast<double>(ctx.processed_rows) : 0.0}};
    outputs->write("manifest.json", manifest.dump(2) + "\n");
    out << "ok " << sub << ' ' << out_dir.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    if (outputs) outputs->rollback();
    err << "error[" << kind_name(e.kind()) << "]: " << one_line(e.what()) << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    if (outputs) outputs->rollback();
    err << "error[data]: " << one_line(e.what()) << '\n';
    return kExitData;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace tabdpt::cli
