#include "hyperadv/experiment.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "hyperadv/error.hpp"
#include "json.hpp"

namespace hyperadv::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using models::LabeledBatch;

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::kValidation, "config: " + where + ": " + what);
}

// Walks one JSON object, remembering which keys were read so the rest can
// be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) invalid(where_, "expected an object");
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v->is_number()) invalid(path(key), "expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v->is_number_unsigned()) invalid(path(key), "expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) invalid(path(key), "expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) invalid(path(key), "expected a string");
      }
      out = v->get<T>();
    } catch (const nlohmann::json::exception& e) {
      invalid(path(key), e.what());
    }
  }

  void read_epsilon(const std::string& key, double& out) {
    if (const json* v = find(key)) out = epsilon_value(*v, path(key));
  }

  static double epsilon_value(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      try {
        return parse_epsilon(v.get<std::string>());
      } catch (const Error& e) {
        invalid(where, e.what());
      }
    }
    invalid(where, "expected a number or a fraction string such as \"8/255\"");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) invalid(path(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string activation_name(models::Activation a) { return a == models::Activation::kTanh ? "tanh" : "relu"; }

models::Activation parse_activation(const std::string& s) {
  if (s == "tanh") return models::Activation::kTanh;
  if (s == "relu") return models::Activation::kRelu;
  invalid("model.activation", "expected tanh or relu, got '" + s + "'");
}

std::string bootstrap_name(attacks::PagdBootstrap b) {
  return b == attacks::PagdBootstrap::kTentativeStep ? "tentative_step" : "previous_is_tentative";
}

attacks::PagdBootstrap parse_bootstrap(const std::string& s, const std::string& where) {
  if (s == "tentative_step") return attacks::PagdBootstrap::kTentativeStep;
  if (s == "previous_is_tentative") return attacks::PagdBootstrap::kPreviousIsTentative;
  invalid(where, "expected tentative_step or previous_is_tentative");
}

AttackSpec parse_attack(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  AttackSpec a;
  std::string name;
  r.read("name", name);
  if (name.empty()) invalid(where, "missing attack name");
  try {
    a.kind = attacks::parse_attack_kind(name);
  } catch (const Error& e) {
    invalid(r.path("name"), e.what());
  }
  if (const json* e = r.find("epsilon")) {
    a.epsilons.clear();
    if (e->is_array()) {
      for (std::size_t i = 0; i < e->size(); ++i) {
        a.epsilons.push_back(ObjectReader::epsilon_value((*e)[i], r.path("epsilon") + "[" + std::to_string(i) + "]"));
      }
    } else {
      a.epsilons.push_back(ObjectReader::epsilon_value(*e, r.path("epsilon")));
    }
  }
  std::string norm = attacks::to_string(a.norm);
  r.read("norm", norm);
  try {
    a.norm = attacks::parse_norm(norm);
  } catch (const Error& e) {
    invalid(r.path("norm"), e.what());
  }
  r.read("steps", a.steps);
  r.read("alpha_fraction", a.alpha_fraction);
  r.read("random_start", a.random_start);
  std::string boot = bootstrap_name(a.pagd_bootstrap);
  r.read("pagd_bootstrap", boot);
  a.pagd_bootstrap = parse_bootstrap(boot, r.path("pagd_bootstrap"));
  r.finish();
  return a;
}

std::string format_real(double v, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string batch_csv(const LabeledBatch& b) {
  std::string out = "label";
  for (std::size_t j = 0; j < b.input_dim; ++j) out += ",x" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < b.size(); ++i) {
    out += std::to_string(b.labels[i]);
    for (double v : b.row(i)) out += ',' + format_real(v);
    out += '\n';
  }
  return out;
}

void check_compatible(const models::HyperbolicClassifier& m, const ExperimentConfig& cfg, const LabeledBatch& data,
                      const fs::path& source) {
  std::vector<std::string> problems;
  if (m.input_dim() != data.input_dim) {
    problems.push_back("input_dim " + std::to_string(m.input_dim()) + " vs dataset " + std::to_string(data.input_dim));
  }
  if (m.num_classes() != data.num_classes) {
    problems.push_back("num_classes " + std::to_string(m.num_classes()) + " vs dataset " +
                       std::to_string(data.num_classes));
  }
  if (m.feature_dim() != cfg.model.feature_dim) {
    problems.push_back("feature_dim " + std::to_string(m.feature_dim()) + " vs config " +
                       std::to_string(cfg.model.feature_dim));
  }
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; l + 1 < m.layers().size(); ++l) hidden.push_back(m.layers()[l].out);
  if (hidden != cfg.model.hidden) problems.push_back("hidden layer sizes differ from config");
  if (m.curvature().value() != cfg.model.curvature) problems.push_back("curvature differs from config");
  if (m.activation() != cfg.model.activation) problems.push_back("activation differs from config");
  if (!problems.empty()) {
    std::string msg = "checkpoint " + source.string() + " does not match the config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw Error(ErrorKind::kValidation, msg);
  }
}

}  // namespace

double parse_epsilon(const std::string& text) {
  const auto parse_num = [&](const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &pos);
    } catch (const std::logic_error&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw Error(ErrorKind::kValidation, "epsilon: cannot parse '" + text + "'");
    return v;
  };
  const auto slash = text.find('/');
  if (slash == std::string::npos) return parse_num(text);
  const double den = parse_num(text.substr(slash + 1));
  if (den == 0.0) throw Error(ErrorKind::kValidation, "epsilon: zero denominator in '" + text + "'");
  return parse_num(text.substr(0, slash)) / den;
}

attacks::AttackConfig AttackSpec::resolve(double epsilon, std::uint64_t seed) const {
  const bool iterative = attacks::is_iterative(kind);
  attacks::AttackConfig c;
  c.epsilon = epsilon;
  c.norm = norm;
  c.steps = steps ? steps : (iterative ? 20 : 1);
  c.alpha = epsilon * (alpha_fraction > 0.0 ? alpha_fraction : (iterative ? 0.25 : 1.0));
  c.seed = seed;
  c.random_start = random_start;
  c.pagd_bootstrap = pagd_bootstrap;
  return c;
}

void ExperimentConfig::validate() const {
  if (dataset.kind == DatasetKind::kHierarchy) {
    dataset.hierarchy.validate();
  } else {
    if (dataset.cifar_path.empty()) invalid("dataset.cifar.path", "required for the cifar dataset");
    if (!fs::exists(dataset.cifar_path)) invalid("dataset.cifar.path", "file not found: " + dataset.cifar_path.string());
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) invalid("dataset.test_fraction", "must lie in (0,1)");
  if (model.hidden.empty()) invalid("model.hidden", "needs at least one hidden layer");
  for (std::size_t h : model.hidden) {
    if (h == 0) invalid("model.hidden", "layer sizes must be positive");
  }
  if (model.feature_dim == 0) invalid("model.feature_dim", "must be positive");
  if (!(model.curvature > 0.0) || !std::isfinite(model.curvature)) invalid("model.curvature", "must be positive");
  if (!(model.logit_scale > 0.0) || !std::isfinite(model.logit_scale)) invalid("model.logit_scale", "must be positive");
  if (!(model.prototype_radius > 0.0)) invalid("model.prototype_radius", "must be positive");
  try {
    training.validate();
  } catch (const Error& e) {
    invalid("training", e.what());
  }
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    const std::string where = "attacks[" + std::to_string(i) + "]";
    if (attacks[i].epsilons.empty()) invalid(where + ".epsilon", "needs at least one value");
    if (attacks[i].alpha_fraction < 0.0) invalid(where + ".alpha_fraction", "must be positive");
    for (double e : attacks[i].epsilons) {
      if (!(e > 0.0) || !std::isfinite(e)) invalid(where + ".epsilon", "must be positive");
      try {
        attacks[i].resolve(e, 0).validate();
      } catch (const Error& err) {
        invalid(where, err.what());
      }
    }
  }
  if (seeds.empty()) invalid("seeds", "needs at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) invalid("seeds", "duplicate seed");
  if (output_dir.empty()) invalid("output_dir", "must not be empty");
  if (threads == 0) invalid("threads", "must be positive");
}

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kValidation, std::string("config: not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader r(root, "");

  if (const json* d = r.find("dataset")) {
    ObjectReader dr(*d, "dataset");
    std::string kind = "hierarchy";
    dr.read("kind", kind);
    if (kind == "hierarchy") {
      c.dataset.kind = DatasetKind::kHierarchy;
    } else if (kind == "cifar") {
      c.dataset.kind = DatasetKind::kCifar;
    } else {
      invalid("dataset.kind", "expected hierarchy or cifar, got '" + kind + "'");
    }
    if (const json* h = dr.find("hierarchy")) {
      ObjectReader hr(*h, "dataset.hierarchy");
      auto& hs = c.dataset.hierarchy;
      hr.read("branching", hs.branching);
      hr.read("depth", hs.depth);
      hr.read("input_dim", hs.input_dim);
      hr.read("class_separation", hs.class_separation);
      hr.read("depth_decay", hs.depth_decay);
      hr.read("noise_scale", hs.noise_scale);
      hr.read("samples_per_class", hs.samples_per_class);
      hr.read("seed", hs.seed);
      hr.finish();
    }
    if (const json* cf = dr.find("cifar")) {
      ObjectReader cr(*cf, "dataset.cifar");
      std::string path;
      cr.read("path", path);
      c.dataset.cifar_path = path;
      cr.read("subset", c.dataset.cifar_subset);
      cr.finish();
    }
    dr.read("test_fraction", c.dataset.test_fraction);
    dr.finish();
  }

  if (const json* m = r.find("model")) {
    ObjectReader mr(*m, "model");
    mr.read("hidden", c.model.hidden);
    mr.read("feature_dim", c.model.feature_dim);
    mr.read("curvature", c.model.curvature);
    mr.read("logit_scale", c.model.logit_scale);
    std::string act = activation_name(c.model.activation);
    mr.read("activation", act);
    c.model.activation = parse_activation(act);
    mr.read("prototype_radius", c.model.prototype_radius);
    mr.finish();
  }

  if (const json* t = r.find("training")) {
    ObjectReader tr(*t, "training");
    tr.read("epochs", c.training.epochs);
    tr.read("lr", c.training.lr);
    tr.read("momentum", c.training.momentum);
    tr.read("batch_size", c.training.batch_size);
    std::string aug = models::to_string(c.training.augmentation);
    tr.read("augmentation", aug);
    try {
      c.training.augmentation = models::parse_augmentation(aug);
    } catch (const Error& e) {
      invalid("training.augmentation", e.what());
    }
    tr.read_epsilon("augmentation_epsilon", c.training.augmentation_epsilon);
    tr.read("adversarial_fraction", c.training.adversarial_fraction);
    tr.finish();
  }

  if (const json* a = r.find("attacks")) {
    if (!a->is_array()) invalid("attacks", "expected a list");
    for (std::size_t i = 0; i < a->size(); ++i) c.attacks.push_back(parse_attack((*a)[i], "attacks[" + std::to_string(i) + "]"));
  }
  r.read("seeds", c.seeds);
  std::string out = c.output_dir.string();
  r.read("output_dir", out);
  c.output_dir = out;
  r.read("threads", c.threads);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::kValidation, "config: " + std::string(e.what()));
  }
  return parse_config(text);
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  const auto& hs = c.dataset.hierarchy;
  j["dataset"] = {{"kind", c.dataset.kind == DatasetKind::kHierarchy ? "hierarchy" : "cifar"},
                  {"hierarchy",
                   {{"branching", hs.branching},
                    {"depth", hs.depth},
                    {"input_dim", hs.input_dim},
                    {"class_separation", hs.class_separation},
                    {"depth_decay", hs.depth_decay},
                    {"noise_scale", hs.noise_scale},
                    {"samples_per_class", hs.samples_per_class},
                    {"seed", hs.seed}}},
                  {"cifar", {{"path", c.dataset.cifar_path.string()}, {"subset", c.dataset.cifar_subset}}},
                  {"test_fraction", c.dataset.test_fraction}};
  j["model"] = {{"hidden", c.model.hidden},
                {"feature_dim", c.model.feature_dim},
                {"curvature", c.model.curvature},
                {"logit_scale", c.model.logit_scale},
                {"activation", activation_name(c.model.activation)},
                {"prototype_radius", c.model.prototype_radius}};
  j["training"] = {{"epochs", c.training.epochs},
                   {"lr", c.training.lr},
                   {"momentum", c.training.momentum},
                   {"batch_size", c.training.batch_size},
                   {"augmentation", models::to_string(c.training.augmentation)},
                   {"augmentation_epsilon", c.training.augmentation_epsilon},
                   {"adversarial_fraction", c.training.adversarial_fraction}};
  json attacks = json::array();
  for (const auto& a : c.attacks) {
    const attacks::AttackConfig r = a.resolve(1.0, 0);
    attacks.push_back({{"name", attacks::to_string(a.kind)},
                       {"epsilon", a.epsilons},
                       {"norm", attacks::to_string(a.norm)},
                       {"steps", r.steps},
                       {"alpha_fraction", r.alpha},
                       {"random_start", a.random_start},
                       {"pagd_bootstrap", bootstrap_name(a.pagd_bootstrap)}});
  }
  j["attacks"] = attacks;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir.string();
  j["threads"] = c.threads;
  return j.dump(2) + "\n";
}

std::pair<LabeledBatch, LabeledBatch> load_dataset(const ExperimentConfig& c, std::uint64_t seed) {
  LabeledBatch data;
  if (c.dataset.kind == DatasetKind::kHierarchy) {
    models::HierarchySpec hs = c.dataset.hierarchy;
    hs.seed += seed;
    data = models::gen_hierarchy(hs);
  } else {
    data = models::load_cifar_binary(c.dataset.cifar_path, c.dataset.cifar_subset, seed);
  }
  return models::split(data, c.dataset.test_fraction, seed);
}

models::ClassifierSpec classifier_spec(const ExperimentConfig& c, std::size_t input_dim, std::size_t num_classes,
                                       std::uint64_t seed) {
  models::ClassifierSpec s;
  s.input_dim = input_dim;
  s.hidden = c.model.hidden;
  s.feature_dim = c.model.feature_dim;
  s.num_classes = num_classes;
  s.curvature = c.model.curvature;
  s.logit_scale = c.model.logit_scale;
  s.activation = c.model.activation;
  s.prototype_radius = c.model.prototype_radius;
  s.seed = seed;
  return s;
}

fs::path checkpoint_name(std::uint64_t seed) { return "checkpoint_seed" + std::to_string(seed) + ".bin"; }

fs::path report_stem(const std::string& attack, attacks::Norm norm, double epsilon, std::uint64_t seed) {
  return attack + "_" + attacks::to_string(norm) + "_eps" + format_real(epsilon * 255.0, "%.6g") + "-255_seed" +
         std::to_string(seed);
}

ExperimentConfig apply_overrides(ExperimentConfig c, const CommandOptions& o) {
  if (o.out) c.output_dir = *o.out;
  if (o.seed) c.seeds = {*o.seed};
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

std::vector<TrainOutcome> cmd_train(const ExperimentConfig& c) {
  c.validate();
  fs::create_directories(c.output_dir);
  DirectoryLock lock(c.output_dir);
  write_file(c.output_dir / "effective_config.json", to_json(c));
  std::vector<TrainOutcome> outcomes;
  for (std::uint64_t seed : c.seeds) {
    const auto [train_set, test_set] = load_dataset(c, seed);
    models::TrainConfig tc = c.training;
    tc.seed = seed;
    const models::HyperbolicClassifier init(classifier_spec(c, train_set.input_dim, train_set.num_classes, seed));
    const models::TrainResult res = models::train(init, train_set, tc);
    models::save_checkpoint(res.model, c.output_dir / checkpoint_name(seed));

    TrainOutcome o{seed, res.log.final_loss, res.log.epochs.back().train_accuracy, models::accuracy(res.model, test_set)};
    json log;
    log["seed"] = seed;
    log["final_loss"] = o.final_loss;
    log["train_accuracy"] = o.train_accuracy;
    log["test_accuracy"] = o.test_accuracy;
    json epochs = json::array();
    for (const auto& e : res.log.epochs) {
      epochs.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"train_accuracy", e.train_accuracy}});
    }
    log["epochs"] = epochs;
    write_file(c.output_dir / ("train_log_seed" + std::to_string(seed) + ".json"), log.dump(2) + "\n");
    outcomes.push_back(o);
  }
  return outcomes;
}

std::vector<SummaryRow> summarize_reports(const std::vector<analysis::AttackReport>& reports) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<const analysis::AttackReport*>> groups;
  for (const auto& r : reports) groups[{r.attack_name, r.norm, r.epsilon}].push_back(&r);
  std::vector<SummaryRow> rows;
  for (const auto& [key, members] : groups) {
    SummaryRow row;
    std::tie(row.attack, row.norm, row.epsilon) = key;
    row.runs = members.size();
    for (const auto* r : members) {
      row.clean_accuracy += r->clean_accuracy;
      row.robust_accuracy += r->robust_accuracy;
      row.mean_msp_drop += r->mean_msp_drop;
      row.mean_hyperbolic_distance += r->mean_hyperbolic_distance;
      row.mean_angular_fraction += r->mean_angular_fraction;
    }
    const auto n = static_cast<double>(members.size());
    row.clean_accuracy /= n;
    row.robust_accuracy /= n;
    row.mean_msp_drop /= n;
    row.mean_hyperbolic_distance /= n;
    row.mean_angular_fraction /= n;
    rows.push_back(row);
  }
  return rows;
}

std::string render_table(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-5s %10s %5s %8s %8s %9s %9s %9s\n", "attack", "norm", "eps*255", "runs",
                "clean%", "robust%", "msp_drop", "hyp_dist", "ang_frac");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %-5s %10.4g %5zu %8.2f %8.2f %9.4f %9.4f %9.4f\n", r.attack.c_str(),
                  r.norm.c_str(), r.epsilon * 255.0, r.runs, 100.0 * r.clean_accuracy, 100.0 * r.robust_accuracy,
                  r.mean_msp_drop, r.mean_hyperbolic_distance, r.mean_angular_fraction);
    out << line;
  }
  return out.str();
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "attack,norm,epsilon,runs,clean_accuracy,robust_accuracy,mean_msp_drop,mean_hyperbolic_distance,"
      "mean_angular_fraction\n";
  for (const auto& r : rows) {
    out += r.attack + ',' + r.norm + ',' + format_real(r.epsilon) + ',' + std::to_string(r.runs) + ',' +
           format_real(r.clean_accuracy) + ',' + format_real(r.robust_accuracy) + ',' + format_real(r.mean_msp_drop) +
           ',' + format_real(r.mean_hyperbolic_distance) + ',' + format_real(r.mean_angular_fraction) + '\n';
  }
  return out;
}

std::string plot_data_csv(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> series;
  std::set<double> eps;
  std::map<std::pair<double, std::string>, double> value;
  for (const auto& r : rows) {
    const std::string name = r.attack + "_" + r.norm;
    if (std::find(series.begin(), series.end(), name) == series.end()) series.push_back(name);
    eps.insert(r.epsilon);
    value[{r.epsilon, name}] = r.robust_accuracy;
  }
  std::string out = "epsilon";
  for (const auto& s : series) out += ',' + s;
  out += '\n';
  for (double e : eps) {
    out += format_real(e);
    for (const auto& s : series) {
      const auto it = value.find({e, s});
      out += ',' + (it == value.end() ? std::string() : format_real(it->second));
    }
    out += '\n';
  }
  return out;
}

std::vector<analysis::AttackReport> cmd_attack(const ExperimentConfig& c, const std::optional<fs::path>& checkpoint) {
  c.validate();
  const bool single_file = checkpoint && fs::is_regular_file(*checkpoint);
  if (single_file && c.seeds.size() != 1) {
    throw Error(ErrorKind::kValidation, "attack: a single checkpoint file needs exactly one seed (use --seed)");
  }
  const fs::path ckpt_dir = checkpoint && !single_file ? *checkpoint : c.output_dir;
  if (checkpoint && !fs::exists(*checkpoint)) {
    throw Error(ErrorKind::kIo, "attack: checkpoint not found: " + checkpoint->string());
  }
  // Every checkpoint is resolved before any output is written.
  std::vector<fs::path> ckpts;
  for (std::uint64_t seed : c.seeds) {
    const fs::path p = single_file ? *checkpoint : ckpt_dir / checkpoint_name(seed);
    if (!fs::exists(p)) throw Error(ErrorKind::kIo, "attack: checkpoint not found: " + p.string());
    ckpts.push_back(p);
  }

  fs::create_directories(c.output_dir / "reports");
  DirectoryLock lock(c.output_dir);
  write_file(c.output_dir / "effective_config.json", to_json(c));

  std::vector<analysis::AttackReport> reports;
  for (std::size_t si = 0; si < c.seeds.size(); ++si) {
    const std::uint64_t seed = c.seeds[si];
    const models::HyperbolicClassifier model = models::load_checkpoint(ckpts[si]);
    const LabeledBatch test_set = load_dataset(c, seed).second;
    check_compatible(model, c, test_set, ckpts[si]);

    const auto emit = [&](analysis::AttackReport r, attacks::Norm norm) {
      r.norm = attacks::to_string(norm);
      r.seeds_used = {seed};
      const fs::path stem = c.output_dir / "reports" / report_stem(r.attack_name, norm, r.epsilon, seed);
      write_file(stem.string() + ".json", analysis::to_json(r));
      write_file(stem.string() + ".csv", analysis::to_csv(r.per_sample_records));
      reports.push_back(std::move(r));
    };
    emit(analysis::evaluate(model, test_set, test_set, "clean", 0.0, c.threads), attacks::Norm::kLinf);
    for (const AttackSpec& spec : c.attacks) {
      for (double eps : spec.epsilons) {
        const attacks::AttackResult adv = attacks::run_attack(spec.kind, model, test_set, spec.resolve(eps, seed));
        analysis::AttackReport r = analysis::evaluate(model, test_set, test_set.with_inputs(adv.inputs),
                                                      attacks::to_string(spec.kind), eps, c.threads);
        r.flagged_count = adv.flagged_count();
        emit(std::move(r), spec.norm);
      }
    }
  }
  const std::vector<SummaryRow> rows = summarize_reports(reports);
  write_file(c.output_dir / "summary.txt", render_table(rows));
  write_file(c.output_dir / "summary.csv", summary_csv(rows));
  write_file(c.output_dir / "plot_data.csv", plot_data_csv(rows));
  return reports;
}

std::vector<SummaryRow> cmd_report(const std::vector<fs::path>& files, const fs::path& out_dir) {
  if (files.empty()) throw Error(ErrorKind::kValidation, "report: no report files given");
  std::vector<analysis::AttackReport> reports;
  for (const auto& f : files) {
    try {
      reports.push_back(analysis::report_from_json(read_file(f)));
    } catch (const Error& e) {
      throw Error(e.kind(), f.string() + ": " + e.what());
    }
  }
  const std::vector<SummaryRow> rows = summarize_reports(reports);
  fs::create_directories(out_dir);
  DirectoryLock lock(out_dir);
  write_file(out_dir / "report_table.txt", render_table(rows));
  write_file(out_dir / "report_summary.csv", summary_csv(rows));
  write_file(out_dir / "plot_data.csv", plot_data_csv(rows));
  return rows;
}

void cmd_gen_data(const ExperimentConfig& c) {
  c.validate();
  fs::create_directories(c.output_dir);
  DirectoryLock lock(c.output_dir);
  const auto [train_set, test_set] = load_dataset(c, c.seeds.front());
  write_file(c.output_dir / "train.csv", batch_csv(train_set));
  write_file(c.output_dir / "test.csv", batch_csv(test_set));
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  const fs::path p = dir / ".lock";
  fd_ = ::open(p.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorKind::kIo, "cannot open lock file " + p.string());
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorKind::kIo, "another experiment is running in " + dir.string() + " (lock held on " + p.string() + ")");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hyperadv::cli
