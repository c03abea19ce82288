#include "commands.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "scrap/annotation/split.hpp"
#include "scrap/common/error.hpp"
#include "scrap/metrics/metrics.hpp"
#include "scrap/mil/checkpoint.hpp"
#include "scrap/mil/training.hpp"
#include "scrap/pipeline/dataset_export.hpp"
#include "scrap/pipeline/http_server.hpp"
#include "scrap/sim/campaign_io.hpp"

namespace scrapctl {

namespace fs = std::filesystem;
using nlohmann::json;
using scrap::ConfigError;
using scrap::DataError;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out.flush()) throw DataError("cannot write " + p.string());
}

void write_labels(const std::vector<scrap::annotation::LabeledRow>& rows, const fs::path& p) {
  std::string text;
  for (const auto& r : rows)
    text += json{{"railcar_id", r.railcar_id},   {"blind_id", r.blind_id},
                 {"contamination", r.contamination}, {"grade", r.grade},
                 {"dispersion", r.dispersion},   {"provenance", r.provenance}}
                .dump() +
            "\n";
  write_text(p, text);
}

std::vector<scrap::annotation::LabeledRow> read_labels(const fs::path& dir) {
  const auto p = dir / "labels.jsonl";
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("no labels.jsonl in " + dir.string());
  std::vector<scrap::annotation::LabeledRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      scrap::annotation::LabeledRow r;
      r.railcar_id = j.at("railcar_id").get<std::string>();
      r.blind_id = j.value("blind_id", "");
      r.contamination = j.at("contamination").get<double>();
      r.grade = j.at("grade").get<std::string>();
      r.dispersion = j.value("dispersion", 0.0);
      r.provenance = j.value("provenance", "");
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return rows;
}

// Labels from the annotation run, or the simulator's ground truth.
std::vector<scrap::annotation::LabeledRow> labels_or_truth(const scrap::sim::Campaign& c,
                                                           const std::string& labels_dir) {
  if (!labels_dir.empty()) return read_labels(labels_dir);
  std::vector<scrap::annotation::LabeledRow> rows;
  for (const auto& car : c.railcars)
    rows.push_back({car.railcar_id, "", car.contamination, c.config.grade_names.at(car.grade), 0.0, "truth"});
  return rows;
}

std::array<double, 3> campaign_ratios(const scrap::sim::CampaignConfig& cfg) {
  const double n = static_cast<double>(cfg.railcar_count());
  return {static_cast<double>(cfg.split_counts[0]) / n, static_cast<double>(cfg.split_counts[1]) / n,
          static_cast<double>(cfg.split_counts[2]) / n};
}

scrap::annotation::SplitAssignment split_for(const scrap::sim::Campaign& c,
                                             const std::vector<scrap::annotation::LabeledRow>& rows,
                                             std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& r : rows) ids.push_back(r.railcar_id);
  return scrap::annotation::split_by_railcar(ids, campaign_ratios(c.config), seed);
}

}  // namespace

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  try {
    auto j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config " + path + " is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

int simulate(const SimulateArgs& a) {
  auto j = load_config(a.config);
  if (a.full_scale) j["split_counts"] = {1504, 305, 223};
  if (a.split_counts) {
    if (a.split_counts->size() != 3) throw ConfigError("--split-counts needs three values");
    j["split_counts"] = *a.split_counts;
  }
  if (a.seed) j["seed"] = *a.seed;
  if (a.p_hot) j["p_hot"] = *a.p_hot;
  if (a.feature_sigma) j["feature_sigma"] = *a.feature_sigma;
  const auto cfg = scrap::sim::CampaignConfig::from_json(j);
  const auto campaign = scrap::sim::gen_campaign(cfg);
  scrap::sim::write_campaign(campaign, a.out);
  std::cout << json{{"out", a.out},
                    {"railcars", campaign.railcars.size()},
                    {"noise_floor", campaign.noise_floor},
                    {"config_digest", cfg.digest()}}
                   .dump()
            << '\n';
  return 0;
}

int annotate(const AnnotateArgs& a) {
  const auto campaign = scrap::sim::load_campaign(a.campaign);
  const auto j = load_config(a.config);
  scrap::annotation::AnnotationConfig cfg;
  cfg.salt = j.value("salt", cfg.salt);
  cfg.flag_threshold = j.value("flag_threshold", cfg.flag_threshold);
  cfg.raters_per_item = j.value("raters_per_item", campaign.config.raters_per_item);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.taxonomy = scrap::annotation::GradeTaxonomy(campaign.config.grade_names);
  if (a.salt) cfg.salt = *a.salt;
  if (a.seed) cfg.seed = *a.seed;

  const fs::path out(a.out);
  fs::create_directories(out);
  fs::remove(out / "audit.jsonl");
  scrap::annotation::AuditLog audit(out / "audit.jsonl");
  scrap::annotation::AnnotationEngine engine(cfg, audit);
  const auto run = scrap::sim::simulate_annotation(campaign, engine, cfg.seed);
  const auto rows = engine.labeled_rows();
  write_labels(rows, out / "labels.jsonl");
  engine.save_snapshot(out / "annotation_snapshot.json");
  const json summary = {{"railcars", rows.size()},
                        {"flagged", run.flagged},
                        {"tiebreaks", run.tiebreaks},
                        {"adjudicated", run.adjudicated},
                        {"audit_events", audit.size()},
                        {"campaign_digest", campaign.config.digest()}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << '\n';
  return 0;
}

int train(const TrainArgs& a) {
  const auto campaign = scrap::sim::load_campaign(a.campaign);
  const auto rows = labels_or_truth(campaign, a.labels);
  const auto split = split_for(campaign, rows, a.split_seed);
  const scrap::annotation::GradeTaxonomy taxonomy(campaign.config.grade_names);
  const auto data = scrap::sim::assemble_datasets(campaign, rows, split, taxonomy);
  if (data.train.empty()) throw DataError("no trainable railcars in the train partition");

  auto cj = load_config(a.config);
  if (a.epochs) cj["epochs"] = *a.epochs;
  if (a.seed) cj["seed"] = *a.seed;
  if (a.pooling) cj["pooling"] = *a.pooling;
  if (a.lambda) cj["lambda_cls"] = *a.lambda;
  if (a.version) cj["version"] = *a.version;
  auto cfg = scrap::mil::TrainingConfig::from_json(cj);
  cfg.class_names = campaign.config.grade_names;
  cfg.dims.feature_dim = campaign.config.feature_dim;
  cfg.dims.class_num = cfg.class_names.size();
  const std::string objective = a.objective.value_or(cj.value("objective", std::string("mtl")));
  if (objective != "mil" && objective != "mtl") throw ConfigError("objective must be mil or mtl");

  json selection;
  if (a.select_lambda) {
    if (objective != "mtl") throw ConfigError("--select-lambda needs the mtl objective");
    const auto sel = scrap::mil::select_lambda({0.1, 0.3, 1.0, 3.0}, data.train, data.val, cfg);
    cfg.lambda_cls = sel.best_lambda;
    selection = json::array();
    for (const auto& s : sel.scores)
      selection.push_back({{"lambda", s.lambda}, {"val_mae", s.val_mae}, {"val_macro_f1", s.val_macro_f1}, {"score", s.score}});
  }
  auto result = objective == "mtl" ? scrap::mil::train_mtl(data.train, cfg, &data.val)
                                   : scrap::mil::train_mil(data.train, cfg, &data.val);
  auto& model = result.model;
  model.metadata["split_seed"] = a.split_seed;
  model.metadata["campaign_digest"] = campaign.config.digest();
  model.metadata["labels"] = a.labels.empty() ? "truth" : "consensus";
  if (!selection.is_null()) model.metadata["lambda_selection"] = selection;
  scrap::mil::save_checkpoint(model, a.out);
  std::cout << json{{"model", a.out},
                    {"version", model.version},
                    {"objective", objective},
                    {"lambda_cls", cfg.lambda_cls},
                    {"train_bags", data.train.size()},
                    {"val_bags", data.val.size()},
                    {"final_train_loss", result.epochs.back().train_loss},
                    {"checkpoint_hash", scrap::mil::checkpoint_hash(model)}}
                   .dump()
            << '\n';
  return 0;
}

int eval(const EvalArgs& a) {
  const auto model = scrap::mil::load_checkpoint(a.model);
  const auto campaign = scrap::sim::load_campaign(a.campaign);
  auto rows = labels_or_truth(campaign, a.labels);
  const auto split_seed = model.metadata.value("split_seed", std::uint64_t{17});
  const auto split = split_for(campaign, rows, split_seed);
  if (a.against_truth) rows = labels_or_truth(campaign, "");
  const scrap::annotation::GradeTaxonomy taxonomy(campaign.config.grade_names);
  const auto data = scrap::sim::assemble_datasets(campaign, rows, split, taxonomy);
  const auto part = scrap::annotation::partition_from_string(a.split);
  const auto& set = part == scrap::annotation::Partition::kTrain ? data.train
                    : part == scrap::annotation::Partition::kVal ? data.val
                                                                 : data.test;
  if (set.empty()) throw DataError("partition " + a.split + " is empty");
  const auto pred = scrap::mil::predict_dataset(model, set);
  std::vector<double> truth;
  std::vector<std::size_t> truth_cls;
  for (const auto& lb : set) {
    truth.push_back(lb.label.contamination);
    truth_cls.push_back(lb.label.grade.value_or(0));
  }
  const bool mtl = model.metadata.value("objective", std::string("mtl")) == "mtl";
  const std::vector<std::size_t> none;
  const auto report = scrap::metrics::evaluate(pred.contamination, truth, mtl ? std::span<const std::size_t>(pred.grade) : std::span<const std::size_t>(none),
                                               mtl ? std::span<const std::size_t>(truth_cls) : std::span<const std::size_t>(none),
                                               model.class_names, model.version, a.split);
  auto j = report.to_json();
  j["noise_floor"] = campaign.noise_floor;
  j["labels"] = a.against_truth ? "truth" : (a.labels.empty() ? "truth" : "consensus");
  j["checkpoint_hash"] = scrap::mil::checkpoint_hash(model);
  if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, scrap::metrics::EvalReport::csv_header() + "\n" + report.csv_row() + "\n");
  std::cout << j.dump() << '\n';
  return 0;
}

int serve(const ServeArgs& a) {
  auto j = load_config(a.config);
  if (a.data_dir) j["data_dir"] = *a.data_dir;
  if (a.host) j["host"] = *a.host;
  if (a.port) j["port"] = *a.port;
  if (!a.retire.empty()) j["retired_versions"] = a.retire;
  const auto cfg = scrap::pipeline::ServiceConfig::from_json(j);
  auto model = scrap::mil::load_checkpoint(a.model);
  const auto hash = scrap::mil::checkpoint_hash(model);

  std::unique_ptr<scrap::annotation::AuditLog> ann_audit;
  std::unique_ptr<scrap::annotation::AnnotationEngine> engine;
  if (!a.annotations.empty()) {
    const fs::path dir(a.annotations);
    ann_audit = std::make_unique<scrap::annotation::AuditLog>(dir / "audit.jsonl");
    scrap::annotation::AnnotationConfig acfg;
    acfg.taxonomy = scrap::annotation::GradeTaxonomy(model.class_names);
    engine = std::make_unique<scrap::annotation::AnnotationEngine>(acfg, *ann_audit);
    engine->load_snapshot(dir / "annotation_snapshot.json");
  }

  // Block the shutdown signals before any thread starts so only sigwait
  // below sees them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  scrap::pipeline::PipelineService service(cfg, std::move(model), hash, engine.get());
  scrap::pipeline::HttpServer server(service);
  const int port = server.start(cfg.host, cfg.port);
  if (!a.port_file.empty()) {
    const fs::path tmp = a.port_file + ".tmp";
    write_text(tmp, std::to_string(port) + "\n");
    fs::rename(tmp, a.port_file);
  }
  std::cout << json{{"listening", cfg.host + ":" + std::to_string(port)},
                    {"model_version", service.model_version()},
                    {"checkpoint_hash", hash}}
                   .dump()
            << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  service.shutdown();
  if (engine) engine->save_snapshot(fs::path(a.annotations) / "annotation_snapshot.json");
  std::cout << json{{"stopped", true}, {"signal", sig}, {"health", service.health()}}.dump() << std::endl;
  return 0;
}

int export_dataset(const ExportArgs& a) {
  const fs::path wal = fs::path(a.data_dir) / "wal";
  if (!fs::exists(wal)) throw DataError("no write-ahead log under " + a.data_dir);
  const scrap::pipeline::LayerStore store(a.lines, wal);
  const auto rows = read_labels(a.labels);
  const auto res = scrap::pipeline::export_dataset(a.tag, store, rows, scrap::annotation::reference_split_ratios(),
                                                   a.split_seed, a.root);
  std::cout << json{{"dir", res.dir.string()},
                    {"digest", res.digest},
                    {"rows", res.rows},
                    {"counts", res.counts},
                    {"reused", res.reused}}
                   .dump()
            << '\n';
  return 0;
}

}  // namespace scrapctl
