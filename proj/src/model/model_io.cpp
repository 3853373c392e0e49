#include <filesystem>
#include <fstream>
#include <cstring>
#include <functional>
#include <map>

#include <json.hpp>

#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"
#include "fasb/model/transformer.hpp"

namespace fasb {

namespace {

// Visits every tensor in manifest order as (name, data, rows, cols).
template <typename Weights, typename Fn>
void for_each_tensor(Weights& w, Fn&& fn) {
  auto matrix = [&](const std::string& name, auto& m) { fn(name, m.data(), m.rows(), m.cols()); };
  auto vector = [&](const std::string& name, auto& v) { fn(name, v.data(), v.size(), Eigen::Index{1}); };

  matrix("token_embedding", w.token_embedding);
  if (w.position_embedding.size() > 0) matrix("position_embedding", w.position_embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& layer = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    vector(p + "ln1.gain", layer.ln1_gain);
    vector(p + "ln1.bias", layer.ln1_bias);
    matrix(p + "attn.wq", layer.wq);
    vector(p + "attn.bq", layer.bq);
    matrix(p + "attn.wk", layer.wk);
    vector(p + "attn.bk", layer.bk);
    matrix(p + "attn.wv", layer.wv);
    vector(p + "attn.bv", layer.bv);
    matrix(p + "attn.wo", layer.wo);
    vector(p + "attn.bo", layer.bo);
    vector(p + "ln2.gain", layer.ln2_gain);
    vector(p + "ln2.bias", layer.ln2_bias);
    matrix(p + "mlp.w1", layer.w1);
    vector(p + "mlp.b1", layer.b1);
    matrix(p + "mlp.w2", layer.w2);
    vector(p + "mlp.b2", layer.b2);
  }
  vector("lnf.gain", w.lnf_gain);
  vector("lnf.bias", w.lnf_bias);
  matrix("unembedding", w.unembedding);
  vector("unembedding_bias", w.unembedding_bias);
}

}  // namespace

void save_model(const Transformer& model, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "io_error", "cannot create directory " + dir + ": " + ec.message());

  nlohmann::json config = model.config();
  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream bin(dir + "/weights.bin", std::ios::binary | std::ios::trunc);
  require(bin.is_open(), "io_error", "cannot write " + dir + "/weights.bin");

  std::uint64_t offset = 0;
  for_each_tensor(model.weights(), [&](const std::string& name, const float* data, Eigen::Index rows,
                                       Eigen::Index cols) {
    const auto count = static_cast<std::size_t>(rows * cols);
    nlohmann::json shape = cols == 1 ? nlohmann::json::array({rows}) : nlohmann::json::array({rows, cols});
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    io::write_f32(bin, std::span<const float>(data, count));
    offset += count * sizeof(float);
  });
  require(static_cast<bool>(bin), "io_error", "write failed for weights.bin");
  config["tensors"] = std::move(tensors);
  io::write_file(dir + "/config.json", config.dump(2) + "\n");
}

std::shared_ptr<const Transformer> load_model(const std::string& dir) {
  nlohmann::json config_json;
  try {
    config_json = nlohmann::json::parse(io::read_file(dir + "/config.json"));
  } catch (const nlohmann::json::parse_error& e) {
    fail("invalid_config", dir + "/config.json: " + e.what());
  }
  const ModelConfig config = config_json.get<ModelConfig>();
  const std::string blob = io::read_file(dir + "/weights.bin");

  std::map<std::string, nlohmann::json> manifest;
  for (const auto& t : config_json.at("tensors")) manifest[t.at("name").get<std::string>()] = t;

  TransformerWeights weights = TransformerWeights::zeros(config);
  for_each_tensor(weights, [&](const std::string& name, float* data, Eigen::Index rows, Eigen::Index cols) {
    const auto it = manifest.find(name);
    require(it != manifest.end(), "invalid_weights", "tensor '" + name + "' missing from manifest");
    const auto& shape = it->second.at("shape");
    std::size_t count = 1;
    for (const auto& dim : shape) count *= dim.get<std::size_t>();
    require(count == static_cast<std::size_t>(rows * cols), "invalid_weights",
            "tensor '" + name + "' has unexpected shape");
    const auto offset = it->second.at("offset").get<std::size_t>();
    require(offset + count * sizeof(float) <= blob.size(), "invalid_weights",
            "tensor '" + name + "' extends past end of weights.bin");
    std::memcpy(data, blob.data() + offset, count * sizeof(float));
  });
  return std::make_shared<const Transformer>(config, std::move(weights));
}

}  // namespace fasb
