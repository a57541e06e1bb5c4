#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vdnapr/activation.hpp"
#include "vdnapr/encoder.hpp"
#include "vdnapr/nn/adamw.hpp"
#include "vdnapr/vdna.hpp"
#include "vdnapr/world.hpp"

namespace vdnapr::training {

struct MiningCacheConfig {
  std::size_t query_count = 1000;     // queries sampled per refresh
  std::size_t negative_pool = 5000;   // negative candidates sampled per refresh
  std::size_t carryover = 500;        // highest-loss triplets kept from the previous period
  std::size_t refresh_period = 1500;  // consumed triplets between refreshes
  std::size_t negatives = 5;          // negatives per triplet
};

struct TrainingConfig {
  encoder::EncoderConfig encoder = encoder::EncoderConfig::standard();
  MiningCacheConfig cache;
  nn::AdamWConfig optimizer;
  double margin = nn::kDefaultMargin;
  std::size_t epochs = 1;
  std::size_t refreshes_per_epoch = 1;
  std::size_t batch_size = 8;          // triplets per optimizer step
  world::Threshold threshold;          // positives lie within it
  double negative_factor = 2.0;        // negatives lie beyond factor * threshold
  std::string reference_traversal;     // validation database; empty = first traversal seen
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::string to_string() const;
};

struct TrainingSample {
  world::SequenceRecord record;
  vdna::NormalizedVdna vdna;
};

/// Sequence VDNAs of `records` from one pass over `source`, normalized.
std::vector<TrainingSample> make_samples(const vdna::HistogramSpec& spec, activation::ActivationSource& source,
                                         const std::vector<world::SequenceRecord>& records);

/// Refresh bookkeeping: a refresh happens before the first triplet and then
/// whenever `period` triplets have been consumed since the last one.
class RefreshSchedule {
 public:
  explicit RefreshSchedule(std::size_t period);
  /// True if a refresh must run before the next triplet is consumed.
  bool due() const noexcept { return refreshes_ == 0 || since_ >= period_; }
  void refreshed() noexcept {
    ++refreshes_;
    since_ = 0;
  }
  void consume(std::size_t n) noexcept {
    since_ += n;
    consumed_ += n;
  }
  std::size_t refreshes() const noexcept { return refreshes_; }
  std::size_t consumed() const noexcept { return consumed_; }

 private:
  std::size_t period_;
  std::size_t since_ = 0;
  std::size_t consumed_ = 0;
  std::size_t refreshes_ = 0;
};

struct Triplet {
  std::size_t query = 0;
  std::size_t positive = 0;
  std::vector<std::size_t> negatives;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Ground-truth candidates of one query: cross-traversal positives within
/// the threshold, negatives beyond negative_factor * threshold.
struct Candidates {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};
Candidates ground_truth(const std::vector<TrainingSample>& samples, std::size_t query, const TrainingConfig& config);

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t refreshes = 0;        // cumulative
  std::size_t consumed = 0;         // cumulative triplets
  std::size_t steps = 0;            // cumulative optimizer steps
  double mean_loss = 0.0;           // over this epoch's steps
  double val_recall1 = 0.0;
};

struct TrainingResult {
  encoder::EncoderParams best;
  encoder::EncoderParams last;
  nn::AdamWState optimizer;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;       // 0 = initial parameters
  double initial_val_recall1 = 0.0;
};

std::string log_text(const TrainingResult& result);

/// Validation R@1 of all-neuron concat descriptors: database = reference
/// traversal, queries = every other traversal.
double validation_recall1(const vdna::HistogramSpec& spec, const encoder::EncoderParams& params,
                          const std::vector<TrainingSample>& val, const TrainingConfig& config);

/// Hard-mining triplet training of E and W. `best` holds the parameters with
/// the highest end-of-epoch validation R@1 (earliest on ties), or the initial
/// parameters when no epoch runs.
TrainingResult mine_and_train(const vdna::HistogramSpec& spec, const std::vector<TrainingSample>& train,
                              const std::vector<TrainingSample>& val, const TrainingConfig& config);

}  // namespace vdnapr::training
