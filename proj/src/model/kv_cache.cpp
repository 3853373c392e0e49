#include "fasb/model/kv_cache.hpp"

#include "fasb/common/error.hpp"

namespace fasb {

KvCache::KvCache(const ModelConfig& config) : capacity_(config.max_seq_len) {
  const auto rows = static_cast<Eigen::Index>(config.max_seq_len);
  const auto cols = static_cast<Eigen::Index>(config.d_model);
  keys_.assign(config.n_layers, RowMatrixXf::Zero(rows, cols));
  values_.assign(config.n_layers, RowMatrixXf::Zero(rows, cols));
}

void KvCache::write(std::size_t layer, const Eigen::VectorXf& key, const Eigen::VectorXf& value) {
  require(committed_len_ < capacity_, "sequence_overflow", "kv cache is full");
  const auto row = static_cast<Eigen::Index>(committed_len_);
  keys_[layer].row(row) = key.transpose();
  values_[layer].row(row) = value.transpose();
}

void KvCache::commit() {
  require(committed_len_ < capacity_, "sequence_overflow", "kv cache is full");
  ++committed_len_;
}

void KvCache::truncate(std::size_t n) {
  require(n <= committed_len_, "invalid_rollback",
          "cannot truncate kv cache of length " + std::to_string(committed_len_) + " to " +
              std::to_string(n));
  committed_len_ = n;
}

}  // namespace fasb
