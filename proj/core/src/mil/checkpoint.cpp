#include "scrap/mil/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "scrap/common/digest.hpp"
#include "scrap/common/error.hpp"

namespace scrap::mil {
namespace {

nlohmann::json content_json(const MilModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    const auto& t = model.params.value(i);
    params.push_back({{"name", model.params.name(i)},
                      {"rows", t.rows()},
                      {"cols", t.cols()},
                      {"data", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  return {
      {"format", "scrap-mil-checkpoint"},
      {"format_version", kCheckpointFormatVersion},
      {"version", model.version},
      {"dims",
       {{"feature_dim", model.dims.feature_dim},
        {"enc_dim", model.dims.enc_dim},
        {"attn_dim", model.dims.attn_dim},
        {"head_hidden", model.dims.head_hidden},
        {"class_num", model.dims.class_num}}},
      {"pooling", to_string(model.pooling)},
      {"dropout_rate", model.dropout_rate},
      {"sigma_ref", model.sigma_ref},
      {"class_names", model.class_names},
      {"metadata", model.metadata},
      {"params", params},
  };
}

}  // namespace

std::string checkpoint_hash(const MilModel& model) { return sha256_hex(content_json(model).dump()); }

nlohmann::json checkpoint_to_json(const MilModel& model) {
  nlohmann::json doc = content_json(model);
  doc["content_hash"] = sha256_hex(doc.dump());
  return doc;
}

MilModel checkpoint_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("content_hash")) {
    throw IntegrityError("checkpoint: missing content hash");
  }
  nlohmann::json content = doc;
  const std::string recorded = content["content_hash"].get<std::string>();
  content.erase("content_hash");
  const std::string actual = sha256_hex(content.dump());
  if (actual != recorded) {
    throw IntegrityError("checkpoint: content hash mismatch (recorded " + recorded + ", computed " +
                         actual + ")");
  }
  try {
    if (content.at("format") != "scrap-mil-checkpoint" ||
        content.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw DataError("checkpoint: unsupported format");
    }
    MilModel m;
    const auto& d = content.at("dims");
    m.dims.feature_dim = d.at("feature_dim");
    m.dims.enc_dim = d.at("enc_dim");
    m.dims.attn_dim = d.at("attn_dim");
    m.dims.head_hidden = d.at("head_hidden");
    m.dims.class_num = d.at("class_num");
    m.dims.validate();
    m.version = content.at("version");
    m.pooling = pooling_from_string(content.at("pooling"));
    m.dropout_rate = content.at("dropout_rate");
    m.sigma_ref = content.at("sigma_ref");
    m.class_names = content.at("class_names").get<std::vector<std::string>>();
    m.metadata = content.at("metadata");
    for (const auto& p : content.at("params")) {
      m.params.add(p.at("name"), tensor::Tensor2D(p.at("rows"), p.at("cols"),
                                                  p.at("data").get<std::vector<double>>()));
    }
    // A checkpoint must carry exactly the tensors the architecture binds.
    MilModel reference = MilModel::initialize(m.dims, 0, m.class_names);
    if (reference.params.size() != m.params.size()) {
      throw DataError("checkpoint: parameter count mismatch");
    }
    for (std::size_t i = 0; i < reference.params.size(); ++i) {
      const auto& want = reference.params.value(i);
      const auto& got = m.params.value(m.params.index_of(reference.params.name(i)));
      if (!want.same_shape(got)) {
        throw DataError("checkpoint: tensor '" + reference.params.name(i) + "' has shape " +
                        got.shape_string() + ", expected " + want.shape_string());
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed content: ") + e.what());
  }
}

void save_checkpoint(const MilModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model).dump() << '\n';
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

MilModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError(std::string("checkpoint: unparseable: ") + e.what());
  }
  return checkpoint_from_json(doc);
}

}  // namespace scrap::mil
