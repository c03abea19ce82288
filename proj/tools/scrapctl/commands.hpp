#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace scrapctl {

// Every verb reads an optional JSON config file; explicitly passed flags
// are applied on top of it.
nlohmann::json load_config(const std::string& path);

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> p_hot;
  std::optional<double> feature_sigma;
  std::optional<std::vector<std::size_t>> split_counts;
  bool full_scale = false;
};
int simulate(const SimulateArgs& a);

struct AnnotateArgs {
  std::string campaign;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> salt;
};
int annotate(const AnnotateArgs& a);

struct TrainArgs {
  std::string campaign;
  std::string labels;  // empty: use simulator ground truth
  std::string out;
  std::string config;
  std::optional<std::string> objective;  // mil | mtl
  std::optional<std::string> pooling;
  std::optional<double> lambda;
  bool select_lambda = false;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> version;
  std::uint64_t split_seed = 17;
};
int train(const TrainArgs& a);

struct EvalArgs {
  std::string campaign;
  std::string labels;
  std::string model;
  std::string split = "test";
  std::string out;
  std::string csv;
  bool against_truth = false;
};
int eval(const EvalArgs& a);

struct ServeArgs {
  std::string model;
  std::string config;
  std::optional<std::string> data_dir;
  std::optional<std::string> host;
  std::optional<int> port;
  std::string port_file;
  std::string annotations;
  std::vector<std::string> retire;
};
int serve(const ServeArgs& a);

struct ReplayArgs {
  std::string campaign;
  std::string url;
  std::string version = "1";
  std::optional<std::uint64_t> chaos_seed;
  std::size_t max_deliveries = 5;
  std::string out;
};
int replay(const ReplayArgs& a);

struct ReportArgs {
  std::string url;
  std::string railcar;
  std::string out;
};
int report(const ReportArgs& a);

struct ExportArgs {
  std::string tag;
  std::string data_dir;
  std::string labels;
  std::string root;
  std::uint64_t split_seed = 17;
  std::size_t lines = 6;
};
int export_dataset(const ExportArgs& a);

}  // namespace scrapctl
