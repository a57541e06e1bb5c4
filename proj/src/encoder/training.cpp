#include "vdnapr/training.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "vdnapr/error.hpp"
#include "vdnapr/nn/autodiff.hpp"
#include "vdnapr/parallel.hpp"
#include "vdnapr/retrieval.hpp"
#include "vdnapr/sequence_vdna.hpp"

namespace vdnapr::training {

std::string TrainingConfig::to_string() const {
  return fmt::format(
      "encoder {}\ncache queries={} negative_pool={} carryover={} refresh_period={} negatives={}\n"
      "optimizer lr={} beta1={} beta2={} eps={} weight_decay={}\n"
      "margin {}\nepochs {}\nrefreshes_per_epoch {}\nbatch_size {}\nthreshold {}\nnegative_factor {}\n"
      "reference_traversal {}\nseed {}\n",
      encoder.to_string(), cache.query_count, cache.negative_pool, cache.carryover, cache.refresh_period,
      cache.negatives, optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps, optimizer.weight_decay, margin,
      epochs, refreshes_per_epoch, batch_size, threshold.to_string(), negative_factor,
      reference_traversal.empty() ? "-" : reference_traversal, seed);
}

std::vector<TrainingSample> make_samples(const vdna::HistogramSpec& spec, activation::ActivationSource& source,
                                         const std::vector<world::SequenceRecord>& records) {
  const auto vdnas = vdna::accumulate_sequences(spec, source, records);
  std::vector<TrainingSample> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back(TrainingSample{records[i], vdna::normalize(vdnas[i])});
  return out;
}

RefreshSchedule::RefreshSchedule(std::size_t period) : period_(period) {
  if (period == 0) fail(ErrorKind::ConfigError, "refresh period must be >= 1");
}

Candidates ground_truth(const std::vector<TrainingSample>& samples, std::size_t query, const TrainingConfig& config) {
  Candidates c;
  const auto& q = samples.at(query).record;
  world::Threshold far = config.threshold;
  far.value *= config.negative_factor;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i == query) continue;
    const auto& r = samples[i].record;
    if (r.traversal_id != q.traversal_id && world::within_threshold(q, r, config.threshold)) c.positives.push_back(i);
    else if (!world::within_threshold(q, r, far)) c.negatives.push_back(i);
  }
  return c;
}

std::string log_text(const TrainingResult& result) {
  std::string s = "# vdnapr training log v1\n";
  s += fmt::format("initial_val_r1 {:.6f}\n", result.initial_val_recall1);
  s += fmt::format("best_epoch {}\n", result.best_epoch);
  s += "epoch refreshes consumed steps mean_loss val_r1\n";
  for (const auto& e : result.log)
    s += fmt::format("{} {} {} {} {:.9f} {:.6f}\n", e.epoch, e.refreshes, e.consumed, e.steps, e.mean_loss,
                     e.val_recall1);
  return s;
}

double validation_recall1(const vdna::HistogramSpec& spec, const encoder::EncoderParams& params,
                          const std::vector<TrainingSample>& val, const TrainingConfig& config) {
  if (val.empty()) return 0.0;
  const std::string ref = config.reference_traversal.empty() ? val.front().record.traversal_id
                                                              : config.reference_traversal;
  std::vector<world::SequenceRecord> db_rec, q_rec;
  std::vector<vdna::NormalizedVdna> db_v, q_v;
  for (const auto& s : val) {
    auto& recs = s.record.traversal_id == ref ? db_rec : q_rec;
    auto& vs = s.record.traversal_id == ref ? db_v : q_v;
    recs.push_back(s.record);
    vs.push_back(s.vdna);
  }
  if (db_rec.empty() || q_rec.empty()) return 0.0;
  const auto all = encoder::NeuronSelection::all();
  const auto db = retrieval::build_db(spec, params, db_rec, db_v, all, false, config.threads);
  const auto queries = retrieval::build_db(spec, params, q_rec, q_v, all, false, config.threads);
  const std::size_t ns[] = {1};
  return retrieval::recall_at_n(db, queries, ns, config.threshold).recall[0];
}

namespace {

class Trainer {
 public:
  Trainer(const vdna::HistogramSpec& spec, const std::vector<TrainingSample>& train, const TrainingConfig& config,
          encoder::EncoderParams& params, nn::AdamWState& optimizer)
      : spec_(spec), train_(train), config_(config), params_(params), optimizer_(optimizer), rng_(config.seed) {
    rng_.discard(1);
    candidates_.reserve(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      candidates_.push_back(ground_truth(train, i, config));
      if (!candidates_.back().positives.empty() && candidates_.back().negatives.size() >= config.cache.negatives)
        valid_queries_.push_back(i);
    }
    if (valid_queries_.empty())
      fail(ErrorKind::TrainingDataError,
           fmt::format("no valid triplet among {} training sequences (need a cross-traversal positive within {} and "
                       "{} negatives beyond {}x that)",
                       train.size(), config.threshold.to_string(), config.cache.negatives, config.negative_factor));
  }

  void refresh() {
    std::vector<std::size_t> queries = valid_queries_;
    std::shuffle(queries.begin(), queries.end(), rng_);
    queries.resize(std::min(queries.size(), config_.cache.query_count));
    std::vector<std::size_t> pool(train_.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    std::shuffle(pool.begin(), pool.end(), rng_);
    pool.resize(std::min(pool.size(), config_.cache.negative_pool));
    std::vector<std::uint8_t> in_pool(train_.size(), 0);
    for (auto i : pool) in_pool[i] = 1;

    std::vector<std::uint8_t> needed(train_.size(), 0);
    for (auto q : queries) {
      needed[q] = 1;
      for (auto p : candidates_[q].positives) needed[p] = 1;
    }
    for (auto i : pool) needed[i] = 1;
    for (const auto& t : cache_) {
      needed[t.query] = needed[t.positive] = 1;
      for (auto n : t.negatives) needed[n] = 1;
    }
    compute_descriptors(needed);

    std::vector<std::pair<double, std::size_t>> previous;
    for (std::size_t i = 0; i < cache_.size(); ++i) previous.emplace_back(-loss_of(cache_[i]), i);
    std::stable_sort(previous.begin(), previous.end());
    std::vector<Triplet> next;
    for (std::size_t i = 0; i < previous.size() && i < config_.cache.carryover; ++i)
      next.push_back(cache_[previous[i].second]);

    for (auto q : queries) {
      Triplet t;
      t.query = q;
      double best = std::numeric_limits<double>::infinity();
      for (auto p : candidates_[q].positives) {
        const double d = distance(q, p);
        if (d < best) {
          best = d;
          t.positive = p;
        }
      }
      std::vector<std::pair<double, std::size_t>> negs;
      for (auto n : candidates_[q].negatives)
        if (in_pool[n]) negs.emplace_back(distance(q, n), n);
      if (negs.size() < config_.cache.negatives) continue;
      std::partial_sort(negs.begin(), negs.begin() + static_cast<std::ptrdiff_t>(config_.cache.negatives), negs.end());
      for (std::size_t k = 0; k < config_.cache.negatives; ++k) t.negatives.push_back(negs[k].second);
      next.push_back(std::move(t));
    }
    if (next.empty()) fail(ErrorKind::TrainingDataError, "cache refresh produced no triplet");
    cache_ = std::move(next);
    std::shuffle(cache_.begin(), cache_.end(), rng_);
    cursor_ = 0;
  }

  /// Takes `count` triplets from the cache, reshuffling when it runs out.
  std::vector<Triplet> take(std::size_t count) {
    std::vector<Triplet> out;
    while (out.size() < count) {
      if (cursor_ == cache_.size()) {
        std::shuffle(cache_.begin(), cache_.end(), rng_);
        cursor_ = 0;
      }
      out.push_back(cache_[cursor_++]);
    }
    return out;
  }

  double step(const std::vector<Triplet>& batch) {
    std::vector<std::size_t> members;
    for (const auto& t : batch) {
      members.push_back(t.query);
      members.push_back(t.positive);
      members.insert(members.end(), t.negatives.begin(), t.negatives.end());
    }
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    auto slot = [&](std::size_t sample) {
      return static_cast<std::size_t>(std::lower_bound(members.begin(), members.end(), sample) - members.begin());
    };

    const std::size_t n = params_.neuron_count(), b = params_.config().bins, h = params_.config().h;
    nn::Tensor rows({members.size() * n, b});
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto mass = train_[members[m]].vdna.mass();
      std::copy(mass.begin(), mass.end(), rows.data().begin() + m * n * b);
    }
    params_.zero_grad();
    nn::Tape tape;
    const auto vars = encoder::record_parameters(tape, params_);
    const auto enc = encoder::encoder_forward(vars, params_.config(), tape.constant(std::move(rows)));
    const auto e = nn::reshape(enc, {members.size(), n * h});
    const auto desc = nn::l2_normalize_rows(nn::matmul(e, vars.head));
    std::vector<nn::Var> losses;
    for (const auto& t : batch) {
      std::vector<nn::Var> negs;
      for (auto k : t.negatives) negs.push_back(nn::row(desc, slot(k)));
      losses.push_back(nn::triplet_loss(nn::row(desc, slot(t.query)), nn::row(desc, slot(t.positive)), negs,
                                        config_.margin));
    }
    const auto loss = nn::mean(losses);
    tape.backward(loss);
    const auto ps = params_.parameters();
    nn::adamw_step(ps, optimizer_);
    return loss.value().item();
  }

 private:
  void compute_descriptors(const std::vector<std::uint8_t>& needed) {
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < needed.size(); ++i)
      if (needed[i]) todo.push_back(i);
    descriptors_.assign(train_.size(), {});
    parallel_for(todo.size(), config_.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        const auto i = todo[k];
        const auto e = encoder::encode_vdna(spec_, train_[i].vdna, params_, encoder::NeuronSelection::all());
        descriptors_[i] = encoder::project_w(e.values, params_).values;
      }
    });
  }

  double distance(std::size_t a, std::size_t b) const {
    const auto& x = descriptors_[a];
    const auto& y = descriptors_[b];
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
  }

  double loss_of(const Triplet& t) const {
    std::vector<std::span<const double>> negs;
    for (auto n : t.negatives) negs.emplace_back(descriptors_[n]);
    return nn::triplet_loss_value(descriptors_[t.query], descriptors_[t.positive], negs, config_.margin);
  }

  const vdna::HistogramSpec& spec_;
  const std::vector<TrainingSample>& train_;
  const TrainingConfig& config_;
  encoder::EncoderParams& params_;
  nn::AdamWState& optimizer_;
  std::mt19937_64 rng_;
  std::vector<Candidates> candidates_;
  std::vector<std::size_t> valid_queries_;
  std::vector<Triplet> cache_;
  std::size_t cursor_ = 0;
  std::vector<std::vector<double>> descriptors_;
};

}  // namespace

TrainingResult mine_and_train(const vdna::HistogramSpec& spec, const std::vector<TrainingSample>& train,
                              const std::vector<TrainingSample>& val, const TrainingConfig& config) {
  if (config.batch_size == 0) fail(ErrorKind::ConfigError, "batch size must be >= 1");
  if (config.refreshes_per_epoch == 0) fail(ErrorKind::ConfigError, "refreshes per epoch must be >= 1");
  if (config.cache.negatives == 0) fail(ErrorKind::ConfigError, "need at least one negative per triplet");
  for (const auto& s : train)
    if (s.vdna.spec_id() != spec.id()) fail(ErrorKind::SpecMismatch, "training VDNA " + s.record.seq_id);
  for (const auto& s : val)
    if (s.vdna.spec_id() != spec.id()) fail(ErrorKind::SpecMismatch, "validation VDNA " + s.record.seq_id);

  auto params = encoder::EncoderParams::initialize(config.encoder, spec, config.seed);
  TrainingResult result{params, params, nn::AdamWState{config.optimizer, 0, {}, {}}, {}, 0, 0.0};
  if (config.epochs == 0) return result;

  Trainer trainer(spec, train, config, params, result.optimizer);
  result.initial_val_recall1 = validation_recall1(spec, params, val, config);
  RefreshSchedule schedule(config.cache.refresh_period);
  const std::size_t per_epoch = config.refreshes_per_epoch * config.cache.refresh_period;
  std::size_t steps = 0;
  double best = -1.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t done = 0; done < per_epoch;) {
      if (schedule.due()) {
        trainer.refresh();
        schedule.refreshed();
      }
      const std::size_t until_refresh = config.cache.refresh_period - (schedule.consumed() % config.cache.refresh_period);
      const std::size_t n = std::min({config.batch_size, per_epoch - done, until_refresh});
      loss_sum += trainer.step(trainer.take(n));
      schedule.consume(n);
      done += n;
      ++epoch_steps;
      ++steps;
    }
    EpochLog e;
    e.epoch = epoch;
    e.refreshes = schedule.refreshes();
    e.consumed = schedule.consumed();
    e.steps = steps;
    e.mean_loss = loss_sum / static_cast<double>(epoch_steps);
    e.val_recall1 = validation_recall1(spec, params, val, config);
    result.log.push_back(e);
    if (e.val_recall1 > best) {
      best = e.val_recall1;
      result.best = params;
      result.best_epoch = epoch;
    }
  }
  result.last = params;
  return result;
}

}  // namespace vdnapr::training
