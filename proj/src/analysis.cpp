#include "hyperadv/analysis.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <sstream>
#include <thread>

#include "hyperadv/attacks.hpp"
#include "hyperadv/error.hpp"
#include "hyperadv/geometry.hpp"
#include "json.hpp"

namespace hyperadv::analysis {

using models::HyperbolicClassifier;
using models::LabeledBatch;

namespace {

void check_aligned(const HyperbolicClassifier& model, const LabeledBatch& clean, const LabeledBatch& adv) {
  if (clean.size() == 0) throw Error(ErrorKind::kValidation, "analysis: empty dataset");
  if (clean.size() != adv.size() || clean.input_dim != adv.input_dim || clean.labels != adv.labels) {
    throw Error(ErrorKind::kShape, "analysis: clean and adversarial batches are not aligned sample-for-sample");
  }
  if (clean.input_dim != model.input_dim()) throw Error(ErrorKind::kShape, "analysis: batch input_dim does not match model");
  if (clean.inputs.size() != clean.size() * clean.input_dim || adv.inputs.size() != adv.size() * adv.input_dim) {
    throw Error(ErrorKind::kShape, "analysis: malformed batch");
  }
}

// Fills records[begin, end).
void fill_records(const HyperbolicClassifier& model, const LabeledBatch& clean, const LabeledBatch& adv,
                  std::size_t begin, std::size_t end, std::vector<SampleRecord>& records) {
  const std::size_t n = end - begin;
  const std::size_t D = clean.input_dim;
  const std::size_t K = model.num_classes();
  const std::size_t d = model.feature_dim();
  const auto rows = [&](const LabeledBatch& b) {
    return std::span<const double>(b.inputs).subspan(begin * D, n * D);
  };
  const std::vector<double> h = model.features(rows(clean));
  const std::vector<double> h_adv = model.features(rows(adv));
  const std::vector<double> p = models::softmax_rows(model.logits_from_features(h), K);
  const std::vector<double> p_adv = models::softmax_rows(model.logits_from_features(h_adv), K);
  const auto pred = HyperbolicClassifier::argmax_rows(p, K);
  const auto pred_adv = HyperbolicClassifier::argmax_rows(p_adv, K);
  const geometry::Curvature c = model.curvature();

  for (std::size_t j = 0; j < n; ++j) {
    SampleRecord& r = records[begin + j];
    r.sample_id = begin + j;
    r.label = clean.labels[begin + j];
    r.pred_clean = pred[j];
    r.pred_adv = pred_adv[j];
    r.msp_clean = p[j * K + pred[j]];
    r.msp_adv = p_adv[j * K + pred[j]];
    const std::span<const double> hj = std::span<const double>(h).subspan(j * d, d);
    const std::span<const double> aj = std::span<const double>(h_adv).subspan(j * d, d);
    r.dist_hyp = geometry::lorentz_distance(geometry::exp_origin(hj, c), geometry::exp_origin(aj, c));
    try {
      const attacks::ShiftDecomposition s = attacks::decompose_shift(hj, aj);
      r.rad_norm = s.radial_norm;
      r.ang_norm = s.angular_norm;
      r.degenerate = false;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerateBase) throw;
      r.rad_norm = 0.0;
      r.ang_norm = 0.0;
      r.degenerate = true;
    }
  }
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double robust_accuracy(const HyperbolicClassifier& model, const LabeledBatch& batch) {
  if (batch.size() == 0) throw Error(ErrorKind::kValidation, "robust_accuracy: empty dataset");
  if (batch.input_dim != model.input_dim()) throw Error(ErrorKind::kShape, "robust_accuracy: input_dim mismatch");
  const auto pred = model.predict(batch.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double msp_drop(const HyperbolicClassifier& model, const LabeledBatch& clean, const LabeledBatch& adversarial) {
  return evaluate(model, clean, adversarial, "", 0.0).mean_msp_drop;
}

double embedding_distance(const HyperbolicClassifier& model, const LabeledBatch& clean, const LabeledBatch& adversarial) {
  return evaluate(model, clean, adversarial, "", 0.0).mean_hyperbolic_distance;
}

DecompositionSummary decomposition_report(const HyperbolicClassifier& model, const LabeledBatch& clean,
                                          const LabeledBatch& adversarial) {
  const AttackReport r = evaluate(model, clean, adversarial, "", 0.0);
  return DecompositionSummary{r.mean_radial_norm, r.mean_angular_norm, r.mean_angular_fraction, r.degenerate_count};
}

AttackReport evaluate(const HyperbolicClassifier& model, const LabeledBatch& clean, const LabeledBatch& adversarial,
                      const std::string& attack_name, double epsilon, std::size_t threads) {
  check_aligned(model, clean, adversarial);
  const std::size_t n = clean.size();
  AttackReport report;
  report.attack_name = attack_name;
  report.epsilon = epsilon;
  report.per_sample_records.resize(n);

  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n);
  if (workers == 1) {
    fill_records(model, clean, adversarial, 0, n, report.per_sample_records);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(workers);
    const std::size_t block = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * block;
      const std::size_t e = std::min(n, b + block);
      if (b >= e) break;
      pool.emplace_back([&, w, b, e] {
        try {
          fill_records(model, clean, adversarial, b, e, report.per_sample_records);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& f : failures) {
      if (f) std::rethrow_exception(f);
    }
  }
  for (auto& r : report.per_sample_records) {
    r.attack = attack_name;
    r.epsilon = epsilon;
  }
  summarize(report);
  return report;
}

void summarize(AttackReport& report) {
  const auto& recs = report.per_sample_records;
  if (recs.empty()) throw Error(ErrorKind::kValidation, "summarize: report has no per-sample records");
  std::size_t clean_ok = 0, adv_ok = 0, degenerate = 0;
  double drop = 0.0, dist = 0.0, rad = 0.0, ang = 0.0, frac = 0.0;
  for (const auto& r : recs) {
    clean_ok += r.pred_clean == r.label ? 1 : 0;
    adv_ok += r.pred_adv == r.label ? 1 : 0;
    drop += r.msp_clean - r.msp_adv;
    dist += r.dist_hyp;
    if (r.degenerate) {
      ++degenerate;
      continue;
    }
    rad += r.rad_norm;
    ang += r.ang_norm;
    const double total = r.rad_norm * r.rad_norm + r.ang_norm * r.ang_norm;
    if (total > 0.0) frac += r.ang_norm * r.ang_norm / total;
  }
  const auto n = static_cast<double>(recs.size());
  report.clean_accuracy = static_cast<double>(clean_ok) / n;
  report.robust_accuracy = static_cast<double>(adv_ok) / n;
  report.mean_msp_drop = drop / n;
  report.mean_hyperbolic_distance = dist / n;
  report.degenerate_count = degenerate;
  const std::size_t usable = recs.size() - degenerate;
  const double u = static_cast<double>(usable);
  report.mean_radial_norm = usable ? rad / u : 0.0;
  report.mean_angular_norm = usable ? ang / u : 0.0;
  report.mean_angular_fraction = usable ? frac / u : 0.0;
}

std::string to_json(const AttackReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = kReportSchemaVersion;
  j["attack"] = r.attack_name;
  j["epsilon"] = r.epsilon;
  j["norm"] = r.norm;
  j["seeds_used"] = r.seeds_used;
  j["clean_accuracy"] = r.clean_accuracy;
  j["robust_accuracy"] = r.robust_accuracy;
  j["mean_msp_drop"] = r.mean_msp_drop;
  j["mean_hyperbolic_distance"] = r.mean_hyperbolic_distance;
  j["mean_radial_norm"] = r.mean_radial_norm;
  j["mean_angular_norm"] = r.mean_angular_norm;
  j["mean_angular_fraction"] = r.mean_angular_fraction;
  j["degenerate_count"] = r.degenerate_count;
  j["flagged_count"] = r.flagged_count;
  auto& arr = j["per_sample_records"] = nlohmann::ordered_json::array();
  for (const auto& s : r.per_sample_records) {
    arr.push_back({{"sample_id", s.sample_id},
                   {"label", s.label},
                   {"pred_clean", s.pred_clean},
                   {"pred_adv", s.pred_adv},
                   {"msp_clean", s.msp_clean},
                   {"msp_adv", s.msp_adv},
                   {"dist_hyp", s.dist_hyp},
                   {"rad_norm", s.rad_norm},
                   {"ang_norm", s.ang_norm},
                   {"degenerate", s.degenerate}});
  }
  return j.dump(2) + "\n";
}

AttackReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("report: invalid JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw Error(ErrorKind::kFormat, "report: missing schema_version");
  }
  const int version = j["schema_version"].get<int>();
  if (version != kReportSchemaVersion) {
    throw Error(ErrorKind::kFormat, "report: schema_version " + std::to_string(version) + " is not supported (expected " +
                                        std::to_string(kReportSchemaVersion) + ")");
  }
  try {
    AttackReport r;
    r.attack_name = j.at("attack").get<std::string>();
    r.epsilon = j.at("epsilon").get<double>();
    r.norm = j.at("norm").get<std::string>();
    r.seeds_used = j.at("seeds_used").get<std::vector<std::uint64_t>>();
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    r.robust_accuracy = j.at("robust_accuracy").get<double>();
    r.mean_msp_drop = j.at("mean_msp_drop").get<double>();
    r.mean_hyperbolic_distance = j.at("mean_hyperbolic_distance").get<double>();
    r.mean_radial_norm = j.at("mean_radial_norm").get<double>();
    r.mean_angular_norm = j.at("mean_angular_norm").get<double>();
    r.mean_angular_fraction = j.at("mean_angular_fraction").get<double>();
    r.degenerate_count = j.at("degenerate_count").get<std::size_t>();
    r.flagged_count = j.at("flagged_count").get<std::size_t>();
    for (const auto& s : j.at("per_sample_records")) {
      SampleRecord rec;
      rec.sample_id = s.at("sample_id").get<std::size_t>();
      rec.attack = r.attack_name;
      rec.epsilon = r.epsilon;
      rec.label = s.at("label").get<std::size_t>();
      rec.pred_clean = s.at("pred_clean").get<std::size_t>();
      rec.pred_adv = s.at("pred_adv").get<std::size_t>();
      rec.msp_clean = s.at("msp_clean").get<double>();
      rec.msp_adv = s.at("msp_adv").get<double>();
      rec.dist_hyp = s.at("dist_hyp").get<double>();
      rec.rad_norm = s.at("rad_norm").get<double>();
      rec.ang_norm = s.at("ang_norm").get<double>();
      rec.degenerate = s.at("degenerate").get<bool>();
      r.per_sample_records.push_back(std::move(rec));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("report: ") + e.what());
  }
}

std::string to_csv(std::span<const SampleRecord> records) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.sample_id) + ',' + r.attack + ',' + format_real(r.epsilon) + ',' + std::to_string(r.label) +
           ',' + std::to_string(r.pred_clean) + ',' + std::to_string(r.pred_adv) + ',' + format_real(r.msp_clean) + ',' +
           format_real(r.msp_adv) + ',' + format_real(r.dist_hyp) + ',' + format_real(r.rad_norm) + ',' +
           format_real(r.ang_norm) + '\n';
  }
  return out;
}

std::vector<SampleRecord> records_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw Error(ErrorKind::kFormat, "csv: unexpected header");
  std::vector<SampleRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw Error(ErrorKind::kFormat, "csv: line " + std::to_string(line_no) + " has " +
                                                            std::to_string(f.size()) + " fields, expected 11");
    try {
      SampleRecord r;
      r.sample_id = std::stoull(f[0]);
      r.attack = f[1];
      r.epsilon = std::stod(f[2]);
      r.label = std::stoull(f[3]);
      r.pred_clean = std::stoull(f[4]);
      r.pred_adv = std::stoull(f[5]);
      r.msp_clean = std::stod(f[6]);
      r.msp_adv = std::stod(f[7]);
      r.dist_hyp = std::stod(f[8]);
      r.rad_norm = std::stod(f[9]);
      r.ang_norm = std::stod(f[10]);
      out.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kFormat, "csv: line " + std::to_string(line_no) + " has a malformed number");
    }
  }
  return out;
}

}  // namespace hyperadv::analysis
