#pragma once

#include <Eigen/Dense>
#include <memory>
#include <stdexcept>
#include <vector>

#include "oldroyd/isvd.hpp"

namespace oldroyd {

/// Uniform interface over full-storage and compressed velocity histories.
/// Both answer weighted-sum queries over the stored snapshot columns; the
/// compressed answer agrees within (T_sv+1)*tol*|w|_1 in the Euclidean norm.
class HistoryBackend {
 public:
  virtual ~HistoryBackend() = default;
  virtual void push(const Eigen::VectorXd& u) = 0;
  virtual Eigen::VectorXd weighted_sum(const Eigen::VectorXd& w) const = 0;
  virtual Eigen::VectorXd column(int j) const = 0;
  virtual int columns() const = 0;
  virtual long long floats_stored() const = 0;
  virtual int rank() const = 0;
  virtual int truncation_count() const { return 0; }
  long long peak_floats() const { return peak_; }

 protected:
  void track_peak() { peak_ = std::max(peak_, floats_stored()); }
  long long peak_ = 0;
};

class FullHistory final : public HistoryBackend {
 public:
  void push(const Eigen::VectorXd& u) override {
    cols_.push_back(u);
    track_peak();
  }
  Eigen::VectorXd weighted_sum(const Eigen::VectorXd& w) const override {
    if (w.size() != static_cast<Eigen::Index>(cols_.size())) {
      throw std::invalid_argument("FullHistory::weighted_sum: length mismatch");
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(cols_.empty() ? 0 : cols_[0].size());
    for (size_t j = 0; j < cols_.size(); ++j) {
      if (w[j] != 0.0) out += w[j] * cols_[j];
    }
    return out;
  }
  Eigen::VectorXd column(int j) const override { return cols_.at(j); }
  int columns() const override { return static_cast<int>(cols_.size()); }
  long long floats_stored() const override {
    return cols_.empty() ? 0 : static_cast<long long>(cols_.size()) * cols_[0].size();
  }
  int rank() const override { return columns(); }

 private:
  std::vector<Eigen::VectorXd> cols_;
};

class CompressedHistory final : public HistoryBackend {
 public:
  explicit CompressedHistory(double tol) : svd_(tol) {}
  void push(const Eigen::VectorXd& u) override {
    svd_.push(u);
    track_peak();
  }
  Eigen::VectorXd weighted_sum(const Eigen::VectorXd& w) const override {
    return svd_.weighted_sum(w);
  }
  Eigen::VectorXd column(int j) const override { return svd_.reconstruct(j); }
  int columns() const override { return svd_.columns(); }
  long long floats_stored() const override { return svd_.floats_stored(); }
  int rank() const override { return svd_.rank(); }
  int truncation_count() const override { return svd_.truncation_count(); }
  const IncrementalSvd& svd() const { return svd_; }

 private:
  IncrementalSvd svd_;
};

}  // namespace oldroyd
