#include "fasb/anchoring/bundle.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fasb/anchoring/training.hpp"
#include "fasb/common/binary_io.hpp"
#include "fasb/model/config.hpp"

namespace fasb::anchoring {

std::string to_string(Method method) { return method == Method::probe ? "probe" : "prototype"; }

Method parse_method(const std::string& name) {
  if (name == "probe") return Method::probe;
  if (name == "prototype") return Method::prototype;
  fail("invalid_argument", "unknown method '" + name + "' (expected probe|prototype)");
}

std::string to_string(Normalization normalization) {
  return normalization == Normalization::raw ? "raw" : "unit";
}

Normalization parse_normalization(const std::string& name) {
  if (name == "raw") return Normalization::raw;
  if (name == "unit") return Normalization::unit;
  fail("invalid_argument", "unknown direction normalization '" + name + "' (expected raw|unit)");
}

Hyperparams default_hyperparams(Method method) {
  if (method == Method::probe) return Hyperparams{60.0, 0.45, 10, Normalization::unit};
  return Hyperparams{40.0, 0.5, 10, Normalization::unit};
}

std::vector<HeadId> SteeringBundle::head_ids() const {
  std::vector<HeadId> ids;
  for (const auto& c : heads) ids.push_back(head_of(c));
  return ids;
}

SteeringSpec SteeringBundle::steering(float strength) const {
  SteeringSpec spec;
  for (const auto& c : heads) {
    if (is_degenerate(c)) continue;
    spec.add(head_of(c), steering_direction(c, hyper.normalization), strength);
  }
  return spec;
}

SteeringBundle SteeringBundle::truncated(std::size_t k) const {
  require(k >= 1 && k <= heads.size(), "invalid_k",
          "k must be in [1, " + std::to_string(heads.size()) + "], got " + std::to_string(k));
  SteeringBundle copy = *this;
  copy.heads.resize(k);
  return copy;
}

void SteeringBundle::save(const std::string& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "io_error", "cannot create directory " + dir + ": " + ec.message());

  nlohmann::json head_list = nlohmann::json::array();
  std::ofstream bin(dir + "/vectors.bin", std::ios::binary | std::ios::trunc);
  require(bin.is_open(), "io_error", "cannot write " + dir + "/vectors.bin");
  std::size_t d_head = 0;
  for (const auto& c : heads) {
    const HeadId& h = head_of(c);
    nlohmann::json entry{{"layer", h.layer},
                         {"head", h.head},
                         {"validation_accuracy", accuracy_of(c)},
                         {"degenerate", is_degenerate(c)}};
    if (const auto* probe = std::get_if<ProbeClassifier>(&c)) {
      d_head = static_cast<std::size_t>(probe->theta.size());
      io::write_f32(bin, std::span<const float>(probe->theta.data(), d_head));
    } else {
      const auto& proto = std::get<PrototypeClassifier>(c);
      d_head = static_cast<std::size_t>(proto.proto_pos.size());
      entry["temperature"] = proto.temperature;
      io::write_f32(bin, std::span<const float>(proto.proto_pos.data(), d_head));
      io::write_f32(bin, std::span<const float>(proto.proto_neg.data(), d_head));
    }
    head_list.push_back(std::move(entry));
  }
  require(static_cast<bool>(bin), "io_error", "write failed for vectors.bin");

  const nlohmann::json manifest{
      {"format", "fasb-bundle/1"},
      {"method", to_string(method)},
      {"k", heads.size()},
      {"d_head", d_head},
      {"hyperparams",
       {{"alpha", hyper.alpha},
        {"beta", hyper.beta},
        {"s", hyper.s},
        {"direction_normalization", to_string(hyper.normalization)}}},
      {"split_seed", split_seed},
      {"lambda", lambda},
      {"tau", tau},
      {"model_fingerprint", fingerprint_hex(model_fingerprint)},
      {"heads", head_list}};
  io::write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

SteeringBundle SteeringBundle::load(const std::string& dir) {
  SteeringBundle bundle;
  const std::string blob = io::read_file(dir + "/vectors.bin");
  try {
    const auto manifest = nlohmann::json::parse(io::read_file(dir + "/manifest.json"));
    require(manifest.at("format") == "fasb-bundle/1", "bad_format", dir + ": unsupported bundle format");
    bundle.method = parse_method(manifest.at("method").get<std::string>());
    const auto& hp = manifest.at("hyperparams");
    bundle.hyper.alpha = hp.at("alpha").get<double>();
    bundle.hyper.beta = hp.at("beta").get<double>();
    bundle.hyper.s = hp.at("s").get<std::size_t>();
    bundle.hyper.normalization = parse_normalization(hp.at("direction_normalization").get<std::string>());
    bundle.split_seed = manifest.at("split_seed").get<std::uint64_t>();
    bundle.lambda = manifest.at("lambda").get<double>();
    bundle.tau = manifest.at("tau").get<double>();
    bundle.model_fingerprint = std::stoull(manifest.at("model_fingerprint").get<std::string>(), nullptr, 16);
    const auto d_head = manifest.at("d_head").get<std::size_t>();
    const std::size_t per_head = bundle.method == Method::probe ? d_head : 2 * d_head;
    const auto& head_list = manifest.at("heads");
    require(head_list.size() == manifest.at("k").get<std::size_t>(), "bad_format", dir + ": k != number of heads");
    require(blob.size() == head_list.size() * per_head * sizeof(float), "bad_format",
            dir + ": vectors.bin size does not match manifest");
    std::size_t offset = 0;
    const auto read_vector = [&]() {
      Eigen::VectorXf v(static_cast<Eigen::Index>(d_head));
      std::memcpy(v.data(), blob.data() + offset, d_head * sizeof(float));
      offset += d_head * sizeof(float);
      return v;
    };
    for (const auto& entry : head_list) {
      const HeadId head{entry.at("layer").get<std::size_t>(), entry.at("head").get<std::size_t>()};
      const double acc = entry.at("validation_accuracy").get<double>();
      const bool degenerate = entry.at("degenerate").get<bool>();
      if (bundle.method == Method::probe) {
        bundle.heads.emplace_back(ProbeClassifier{head, read_vector(), acc, degenerate});
      } else {
        Eigen::VectorXf pos = read_vector();
        Eigen::VectorXf neg = read_vector();
        bundle.heads.emplace_back(
            PrototypeClassifier{head, std::move(pos), std::move(neg), entry.at("temperature").get<double>(), acc, degenerate});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail("bad_format", dir + "/manifest.json: " + e.what());
  }
  return bundle;
}

bool operator==(const SteeringBundle& a, const SteeringBundle& b) {
  if (a.method != b.method || !(a.hyper == b.hyper) || a.split_seed != b.split_seed || a.lambda != b.lambda ||
      a.tau != b.tau || a.model_fingerprint != b.model_fingerprint || a.heads.size() != b.heads.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.heads.size(); ++i) {
    const auto& x = a.heads[i];
    const auto& y = b.heads[i];
    if (x.index() != y.index() || head_of(x) != head_of(y) || accuracy_of(x) != accuracy_of(y) ||
        is_degenerate(x) != is_degenerate(y)) {
      return false;
    }
    if (const auto* p = std::get_if<ProbeClassifier>(&x)) {
      if (p->theta != std::get<ProbeClassifier>(y).theta) return false;
    } else {
      const auto& px = std::get<PrototypeClassifier>(x);
      const auto& py = std::get<PrototypeClassifier>(y);
      if (px.proto_pos != py.proto_pos || px.proto_neg != py.proto_neg || px.temperature != py.temperature) return false;
    }
  }
  return true;
}

AnchorResult anchor(const ActivationSet& activations, const AnchorOptions& options, std::uint64_t model_fingerprint) {
  require(options.k >= 1, "invalid_k", "k must be >= 1");
  require(options.k <= activations.n_layers() * activations.n_heads(), "invalid_k",
          "k = " + std::to_string(options.k) + " exceeds the number of heads (" +
              std::to_string(activations.n_layers() * activations.n_heads()) + ")");
  const SplitIndices split = stratified_split(activations.labels(), options.train_fraction, options.split_seed);

  AnchorResult result;
  for (std::size_t l = 0; l < activations.n_layers(); ++l) {
    for (std::size_t h = 0; h < activations.n_heads(); ++h) {
      const HeadId head{l, h};
      const HeadSamples train = head_samples(activations, head, split.train);
      const HeadSamples validation = head_samples(activations, head, split.validation);
      if (options.method == Method::probe) {
        result.all.emplace_back(train_probe(train, validation, head, ProbeOptions{options.lambda}));
        continue;
      }
      try {
        result.all.emplace_back(build_prototypes(train, validation, head, options.tau));
      } catch (const Error& e) {
        if (e.code() != "zero_norm_prototype") throw;
        const auto d = static_cast<Eigen::Index>(activations.d_head());
        const auto ones = std::count(validation.labels.begin(), validation.labels.end(), 1);
        const double n = static_cast<double>(validation.labels.size());
        const double majority = n > 0 ? std::max<double>(static_cast<double>(ones), n - static_cast<double>(ones)) / n : 0.0;
        result.all.emplace_back(PrototypeClassifier{head, Eigen::VectorXf::Zero(d), Eigen::VectorXf::Zero(d),
                                                    options.tau, majority, true});
      }
    }
  }

  SteeringBundle& bundle = result.bundle;
  bundle.method = options.method;
  bundle.hyper = options.hyper;
  bundle.heads = select_heads(result.all, options.k);
  bundle.split_seed = options.split_seed;
  bundle.lambda = options.lambda;
  bundle.tau = options.tau;
  bundle.model_fingerprint = model_fingerprint;
  return result;
}

}  // namespace fasb::anchoring
