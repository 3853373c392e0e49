#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "fasb/model/config.hpp"

namespace fasb {

using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-layer key/value rows for committed positions. Rows past committed_len
// are stale and never read, so truncation is O(1).
class KvCache {
 public:
  explicit KvCache(const ModelConfig& config);

  std::size_t committed_len() const { return committed_len_; }
  std::size_t capacity() const { return capacity_; }

  // Full backing storage of one layer; rows >= committed_len (other than one
  // just written and not yet committed) hold stale data.
  const RowMatrixXf& key_rows(std::size_t layer) const { return keys_[layer]; }
  const RowMatrixXf& value_rows(std::size_t layer) const { return values_[layer]; }

  // Writes the key/value row for position committed_len in every layer.
  // `commit` must be called after all layers are written.
  void write(std::size_t layer, const Eigen::VectorXf& key, const Eigen::VectorXf& value);
  void commit();

  // Drops positions >= n. Throws if n > committed_len.
  void truncate(std::size_t n);

 private:
  std::size_t capacity_;
  std::size_t committed_len_ = 0;
  std::vector<RowMatrixXf> keys_;
  std::vector<RowMatrixXf> values_;
};

}  // namespace fasb
