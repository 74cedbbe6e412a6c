#include "wbmm/matchmismatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "wbmm/log.hpp"
#include "wbmm/rng.hpp"

namespace wbmm::mm {

namespace {

using encoder::Encoder;
using encoder::Gradients;
using encoder::MatchModel;
using encoder::Mode;
using segmentation::WordBoundaries;

constexpr std::size_t kNoPartner = std::numeric_limits<std::size_t>::max();

std::string int_suffix(const std::string& s, const std::string& prefix) {
  return s.size() > prefix.size() && s.compare(0, prefix.size(), prefix) == 0 ? s.substr(prefix.size()) : "";
}

int parse_positive(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || v < 1) throw ValidationError("bad " + what + ": '" + text + "'");
  return v;
}

// Adam with L2 weight decay added to the gradient.
class Adam {
 public:
  Adam(const TrainConfig& cfg, const MatchModel& model) : cfg_(cfg) {
    for (const auto* enc : {&model.response, &model.stimulus}) {
      for (const auto& p : enc->parameters()) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      }
    }
  }

  void step(MatchModel& model, const Gradients& g_response, const Gradients& g_stimulus) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.adam_beta2, static_cast<double>(t_));
    std::size_t slot = 0;
    auto update = [&](Encoder& enc, const Gradients& grads) {
      auto& params = enc.parameters();
      for (std::size_t i = 0; i < params.size(); ++i, ++slot) {
        Matrix& w = params[i].value;
        const Matrix g = grads[i] + cfg_.weight_decay * w;
        m_[slot] = cfg_.adam_beta1 * m_[slot] + (1.0 - cfg_.adam_beta1) * g;
        v_[slot] = cfg_.adam_beta2 * v_[slot] + (1.0 - cfg_.adam_beta2) * g.cwiseProduct(g);
        w.array() -= cfg_.learning_rate * (m_[slot].array() / c1) /
                     ((v_[slot].array() / c2).sqrt() + cfg_.adam_eps);
      }
    };
    update(model.response, g_response);
    update(model.stimulus, g_stimulus);
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Matrix> m_, v_;
  long t_{0};
};

std::vector<std::size_t> group_keys(const std::vector<Segment>& segments,
                                    std::vector<std::vector<std::size_t>>& groups) {
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::vector<std::size_t> group_of(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto key = std::make_pair(segments[i].subject_id, segments[i].trial_id);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
    group_of[i] = it->second;
  }
  for (auto& g : groups) {
    std::stable_sort(g.begin(), g.end(),
                     [&](std::size_t a, std::size_t b) { return segments[a].position < segments[b].position; });
  }
  return group_of;
}

std::vector<Segment> select_subjects(const std::vector<Segment>& all, const std::vector<std::string>& subjects) {
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::vector<Segment> out;
  for (const auto& s : all) {
    if (wanted.count(s.subject_id)) out.push_back(s);
  }
  return out;
}

void require_subjects(const std::vector<Segment>& segs, const std::vector<std::string>& subjects,
                      const std::string& role) {
  std::set<std::string> present;
  for (const auto& s : segs) present.insert(s.subject_id);
  for (const auto& id : subjects) {
    if (!present.count(id)) throw DataError(role + " subject " + id + " has no records");
  }
}

FoldResult train_core(const TrainConfig& cfg, int fold_id, const std::vector<Segment>& train_segs,
                      const std::vector<PairedExample>& train_pairs, const std::vector<Segment>& test_segs,
                      const std::vector<PairedExample>& test_pairs, int eeg_channels, int mel_bands,
                      const EpochCallback& on_epoch) {
  if (train_pairs.empty()) throw ValidationError("no training pairs");
  if (test_pairs.empty()) throw ValidationError("no test pairs");

  MatchModel model = build_model(cfg, eeg_channels, mel_bands);
  // Include the fold so folds start from different initial weights.
  model = encoder::make_model(model.response.config(), model.stimulus.config(), model.head, model.similarity,
                              mix_seed(cfg.seed, 0xF000 + static_cast<std::uint64_t>(fold_id)));

  const std::uint64_t bound_seed = mix_seed(cfg.seed, 0xB0);
  const auto train_bounds = resolve_boundaries(train_segs, cfg.boundary, model.stimulus.config(), bound_seed);
  const auto test_bounds = resolve_boundaries(test_segs, cfg.boundary, model.stimulus.config(), bound_seed);

  std::vector<Matrix> train_eeg(train_segs.size()), train_mel(train_segs.size());
  for (std::size_t i = 0; i < train_segs.size(); ++i) {
    if (train_segs[i].trainable) train_eeg[i] = train_segs[i].eeg();
    train_mel[i] = train_segs[i].mel();
  }

  FoldResult result;
  result.fold_id = fold_id;
  result.train_pairs = train_pairs.size();
  result.test_pairs = test_pairs.size();

  Adam adam(cfg, model);
  const std::uint64_t run_seed = mix_seed(cfg.seed, 0x7A00 + static_cast<std::uint64_t>(fold_id));

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(run_seed, static_cast<std::uint64_t>(epoch));
    const auto batches = batch_compose(train_pairs, static_cast<std::size_t>(cfg.batch_size), epoch_seed);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (const auto& batch : batches) {
      const std::uint64_t batch_seed = mix_seed(epoch_seed, ++batch_no);
      const double scale = 1.0 / static_cast<double>(batch.size());

      struct StimulusState {
        Encoder::Cache cache;
        Vector embedding;
        Vector grad;
      };
      std::map<std::size_t, StimulusState> stimuli;
      for (std::size_t p : batch) {
        for (std::size_t seg : {train_pairs[p].matched, train_pairs[p].mismatched}) {
          if (stimuli.count(seg)) continue;
          StimulusState& st = stimuli[seg];
          st.embedding = model.stimulus
                             .forward(train_mel[seg], train_bounds[seg], Mode::train,
                                      mix_seed(batch_seed, 2 * seg), &st.cache)
                             .values;
          st.grad = Vector::Zero(st.embedding.size());
        }
      }

      Gradients g_response = model.response.zero_gradients();
      Gradients g_stimulus = model.stimulus.zero_gradients();
      Encoder::Cache eeg_cache;
      for (std::size_t p : batch) {
        const PairedExample& pair = train_pairs[p];
        const Vector re = model.response
                              .forward(train_eeg[pair.matched], train_bounds[pair.matched], Mode::train,
                                       mix_seed(batch_seed, 2 * pair.matched + 1), &eeg_cache)
                              .values;
        StimulusState& pos = stimuli.at(pair.matched);
        StimulusState& neg = stimuli.at(pair.mismatched);
        const double d_plus = model.score(re, pos.embedding);
        const double d_minus = model.score(re, neg.embedding);
        const double loss = pair_loss(d_plus, d_minus);
        if (!std::isfinite(loss)) {
          throw std::runtime_error("training diverged in epoch " + std::to_string(epoch));
        }
        loss_sum += loss;
        const auto [g_plus, g_minus] = pair_loss_gradient(d_plus, d_minus);
        Vector d_re = Vector::Zero(re.size());
        Vector d_re_part, d_rs_part;
        model.score_gradient(re, pos.embedding, d_re_part, d_rs_part);
        d_re += scale * g_plus * d_re_part;
        pos.grad += scale * g_plus * d_rs_part;
        model.score_gradient(re, neg.embedding, d_re_part, d_rs_part);
        d_re += scale * g_minus * d_re_part;
        neg.grad += scale * g_minus * d_rs_part;
        model.response.backward(eeg_cache, d_re, g_response);
      }
      for (auto& [seg, st] : stimuli) model.stimulus.backward(st.cache, st.grad, g_stimulus);
      adam.step(model, g_response, g_stimulus);
    }

    const double mean_loss = loss_sum / static_cast<double>(train_pairs.size());
    const PairScores scores = score_pairs(model, test_segs, test_bounds, test_pairs);
    const double acc = accuracy_from_scores(scores.d_plus, scores.d_minus);
    result.train_loss.push_back(mean_loss);
    result.test_accuracy.push_back(acc);
    log::info("fold " + std::to_string(fold_id) + " epoch " + std::to_string(epoch) + ": loss " +
              std::to_string(mean_loss) + ", test accuracy " + std::to_string(acc) + "%");
    if (cfg.checkpoint_dir) {
      std::filesystem::create_directories(*cfg.checkpoint_dir);
      encoder::save_checkpoint(*cfg.checkpoint_dir / ("fold" + std::to_string(fold_id) + ".ckpt"), model);
    }
    if (on_epoch) on_epoch(epoch, mean_loss, acc);

    if (epoch == cfg.epochs) {
      result.final_accuracy = acc;
      std::map<std::string, std::pair<std::size_t, std::size_t>> tally;  // correct, total
      for (std::size_t i = 0; i < test_pairs.size(); ++i) {
        auto& t = tally[test_segs[test_pairs[i].matched].subject_id];
        t.first += scores.d_plus[i] > scores.d_minus[i] ? 1 : 0;
        t.second += 1;
      }
      for (const auto& [id, t] : tally) {
        result.subject_accuracy[id] = 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second);
      }
    }
  }
  return result;
}

}  // namespace

std::string to_string(MismatchStrategy s) {
  return s == MismatchStrategy::random_same_trial ? "random_same_trial" : "next_sentence";
}

MismatchStrategy strategy_from_string(const std::string& s) {
  if (s == "random_same_trial") return MismatchStrategy::random_same_trial;
  if (s == "next_sentence") return MismatchStrategy::next_sentence;
  throw ValidationError("unknown mismatch strategy '" + s + "' (allowed: random_same_trial, next_sentence)");
}

std::string BoundaryMode::label() const {
  switch (kind) {
    case Kind::true_bounds:
      return "true";
    case Kind::random_n:
      return "random_" + std::to_string(n);
    case Kind::random_count:
      return "random_count_" + std::to_string(min_words) + "_" + std::to_string(max_words);
    case Kind::skip_n:
      return "skip_" + std::to_string(n);
  }
  return "true";
}

BoundaryMode boundary_from_string(const std::string& s) {
  if (s == "true") return BoundaryMode::truth();
  if (const auto rest = int_suffix(s, "random_count_"); !rest.empty()) {
    const auto cut = rest.find('_');
    if (cut == std::string::npos) throw ValidationError("bad boundary mode '" + s + "'");
    return BoundaryMode::random_count(parse_positive(rest.substr(0, cut), "boundary mode"),
                                      parse_positive(rest.substr(cut + 1), "boundary mode"));
  }
  if (const auto rest = int_suffix(s, "random_"); !rest.empty()) {
    return BoundaryMode::random(parse_positive(rest, "boundary mode"));
  }
  if (const auto rest = int_suffix(s, "skip_"); !rest.empty()) {
    return BoundaryMode::skip(parse_positive(rest, "boundary mode"));
  }
  throw ValidationError("unknown boundary mode '" + s + "' (expected true, random_N, random_count_A_B or skip_N)");
}

std::string to_string(ModelKind k) { return k == ModelKind::proposed ? "proposed" : "baseline"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "proposed") return ModelKind::proposed;
  if (s == "baseline") return ModelKind::baseline;
  throw ValidationError("unknown model '" + s + "' (allowed: proposed, baseline)");
}

void validate(const TrainConfig& c) {
  if (c.batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (!(c.learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(c.adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (c.epochs < 1) throw ValidationError("epochs must be at least 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ValidationError("dropout must lie in [0, 1)");
  const BoundaryMode& b = c.boundary;
  if (b.kind == BoundaryMode::Kind::random_n && b.n < 1) {
    throw ValidationError("boundary mode " + b.label() + " needs a positive word count");
  }
  if (b.kind == BoundaryMode::Kind::skip_n && b.n < 2) {
    throw ValidationError("boundary mode " + b.label() + " needs a period of at least 2");
  }
  if (b.kind == BoundaryMode::Kind::random_count && (b.min_words < 1 || b.max_words < b.min_words)) {
    throw ValidationError("random word-count range must satisfy 1 <= min <= max");
  }
}

std::vector<Segment> sentence_segments(const std::vector<corpus::SentenceRecord>& records) {
  std::vector<Segment> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Segment s;
    s.source = &r;
    s.offset = 0;
    s.length = static_cast<Eigen::Index>(r.frames());
    s.bounds = r.word_bounds_feat;
    s.subject_id = r.subject_id;
    s.trial_id = r.trial_id;
    s.position = r.sentence_index;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<PairedExample> build_pairs(const std::vector<Segment>& segments, MismatchStrategy strategy,
                                       std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> groups;
  group_keys(segments, groups);
  Rng rng(seed);
  std::vector<PairedExample> pairs;
  for (const auto& g : groups) {
    if (g.size() < 2) {
      const Segment& s = segments[g.front()];
      throw ValidationError("subject " + s.subject_id + " trial " + std::to_string(s.trial_id) +
                            " has a single sentence; no mismatch candidate exists");
    }
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!segments[g[i]].trainable) continue;
      std::size_t j = 0;
      if (strategy == MismatchStrategy::next_sentence) {
        j = (i + 1) % n;
      } else {
        j = static_cast<std::size_t>(rng.below(n - 1));
        if (j >= i) ++j;
      }
      pairs.push_back({g[i], g[j], strategy});
    }
  }
  return pairs;
}

std::vector<std::size_t> partner_index(const std::vector<PairedExample>& pairs) {
  std::map<std::size_t, std::size_t> by_matched;
  for (std::size_t i = 0; i < pairs.size(); ++i) by_matched.emplace(pairs[i].matched, i);
  std::vector<std::size_t> partner(pairs.size(), kNoPartner);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (auto it = by_matched.find(pairs[i].mismatched); it != by_matched.end()) partner[i] = it->second;
  }
  return partner;
}

std::vector<std::vector<std::size_t>> batch_compose(const std::vector<PairedExample>& pairs,
                                                    std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  const auto partner = partner_index(pairs);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> current;
  std::vector<bool> placed(pairs.size(), false);
  for (std::size_t start : order) {
    for (std::size_t p = start; p != kNoPartner && !placed[p]; p = partner[p]) {
      placed[p] = true;
      current.push_back(p);
      if (current.size() == batch_size) {
        batches.push_back(std::move(current));
        current.clear();
      }
    }
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

double pair_loss(double d_plus, double d_minus) {
  const double p = std::clamp(d_plus, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double q = std::clamp(d_minus, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return -std::log(p) - std::log(1.0 - q);
}

std::pair<double, double> pair_loss_gradient(double d_plus, double d_minus) {
  const bool plus_free = d_plus > kProbabilityClamp && d_plus < 1.0 - kProbabilityClamp;
  const bool minus_free = d_minus > kProbabilityClamp && d_minus < 1.0 - kProbabilityClamp;
  return {plus_free ? -1.0 / d_plus : 0.0, minus_free ? 1.0 / (1.0 - d_minus) : 0.0};
}

double accuracy_from_scores(const std::vector<double>& d_plus, const std::vector<double>& d_minus) {
  if (d_plus.size() != d_minus.size()) throw ValidationError("score vectors differ in length");
  if (d_plus.empty()) throw ValidationError("accuracy of an empty test set is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d_plus.size(); ++i) correct += d_plus[i] > d_minus[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(d_plus.size());
}

MatchModel build_model(const TrainConfig& cfg, int eeg_channels, int mel_bands) {
  auto response = encoder::EncoderConfig::response(eeg_channels);
  auto stimulus = encoder::EncoderConfig::stimulus(mel_bands);
  response.dropout = stimulus.dropout = cfg.dropout;
  auto head = encoder::Head::similarity;
  if (cfg.model == ModelKind::baseline) {
    response.readout = stimulus.readout = encoder::Readout::frame_mean;
    head = encoder::Head::product;
  }
  return encoder::make_model(response, stimulus, head, cfg.similarity, mix_seed(cfg.seed, 0xA0));
}

std::vector<WordBoundaries> resolve_boundaries(const std::vector<Segment>& segments, const BoundaryMode& mode,
                                               const encoder::EncoderConfig& enc, std::uint64_t seed) {
  std::vector<WordBoundaries> out(segments.size());
  if (enc.readout == encoder::Readout::frame_mean) return out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const Segment& s = segments[i];
    const std::size_t steps = enc.strided_length(static_cast<std::size_t>(s.length));
    const std::uint64_t key = mix_seed(mix_seed(seed, static_cast<std::uint64_t>(s.trial_id)),
                                       static_cast<std::uint64_t>(s.position));
    switch (mode.kind) {
      case BoundaryMode::Kind::true_bounds:
        if (s.bounds.empty()) throw ValidationError("segment has no word boundaries");
        out[i] = s.bounds;
        break;
      case BoundaryMode::Kind::skip_n:
        if (s.bounds.empty()) throw ValidationError("segment has no word boundaries");
        out[i] = segmentation::skip_boundaries(s.bounds, static_cast<std::size_t>(mode.n));
        break;
      case BoundaryMode::Kind::random_n:
        out[i] = segmentation::random_boundaries(steps, std::min(steps, static_cast<std::size_t>(mode.n)), key);
        break;
      case BoundaryMode::Kind::random_count:
        out[i] = segmentation::random_count_boundaries(steps, static_cast<std::size_t>(mode.min_words),
                                                       static_cast<std::size_t>(mode.max_words), key);
        break;
    }
  }
  return out;
}

PairScores score_pairs(const MatchModel& model, const std::vector<Segment>& segments,
                       const std::vector<WordBoundaries>& bounds, const std::vector<PairedExample>& pairs) {
  std::map<std::size_t, Vector> stim, resp;
  auto stimulus = [&](std::size_t i) -> const Vector& {
    auto it = stim.find(i);
    if (it == stim.end()) {
      it = stim.emplace(i, model.stimulus.forward(segments[i].mel(), bounds[i], Mode::eval, 0).values).first;
    }
    return it->second;
  };
  PairScores out;
  out.d_plus.reserve(pairs.size());
  out.d_minus.reserve(pairs.size());
  for (const auto& p : pairs) {
    auto it = resp.find(p.matched);
    if (it == resp.end()) {
      it = resp.emplace(p.matched, model.response.forward(segments[p.matched].eeg(), bounds[p.matched],
                                                          Mode::eval, 0).values).first;
    }
    out.d_plus.push_back(model.score(it->second, stimulus(p.matched)));
    out.d_minus.push_back(model.score(it->second, stimulus(p.mismatched)));
  }
  return out;
}

double evaluate(const MatchModel& model, const std::vector<Segment>& segments,
                const std::vector<WordBoundaries>& bounds, const std::vector<PairedExample>& pairs) {
  if (pairs.empty()) throw ValidationError("cannot evaluate an empty test set");
  const PairScores s = score_pairs(model, segments, bounds, pairs);
  return accuracy_from_scores(s.d_plus, s.d_minus);
}

std::vector<FoldSplit> make_folds(std::vector<std::string> subjects, int folds) {
  std::sort(subjects.begin(), subjects.end(), corpus::natural_less);
  if (std::adjacent_find(subjects.begin(), subjects.end()) != subjects.end()) {
    throw ValidationError("duplicate subject ids");
  }
  if (folds < 2) throw ValidationError("need at least 2 folds");
  if (subjects.size() < static_cast<std::size_t>(folds)) {
    throw ValidationError("need at least " + std::to_string(folds) + " subjects for " + std::to_string(folds) +
                          "-fold cross-validation, got " + std::to_string(subjects.size()));
  }
  const std::size_t n = subjects.size();
  const std::size_t k = static_cast<std::size_t>(folds);
  std::vector<FoldSplit> out;
  std::size_t begin = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    FoldSplit split;
    split.fold_id = static_cast<int>(f + 1);
    for (std::size_t i = 0; i < n; ++i) {
      (i >= begin && i < begin + size ? split.test_subjects : split.train_subjects).push_back(subjects[i]);
    }
    begin += size;
    out.push_back(std::move(split));
  }
  return out;
}

void validate(const FoldSplit& split) {
  if (split.train_subjects.empty() || split.test_subjects.empty()) {
    throw ValidationError("fold " + std::to_string(split.fold_id) + " needs both training and test subjects");
  }
  const std::set<std::string> train(split.train_subjects.begin(), split.train_subjects.end());
  for (const auto& s : split.test_subjects) {
    if (train.count(s)) throw ValidationError("subject " + s + " is in both training and test sets");
  }
}

FoldResult train_and_evaluate(const TrainConfig& cfg, int fold_id, const std::vector<Segment>& train_segments,
                              const std::vector<Segment>& test_segments, int eeg_channels, int mel_bands,
                              const EpochCallback& on_epoch) {
  validate(cfg);
  const auto train_pairs = build_pairs(train_segments, cfg.strategy, mix_seed(cfg.seed, 0x9A));
  // Test pairs are fixed for the whole run.
  const auto test_pairs = build_pairs(test_segments, cfg.strategy, mix_seed(cfg.seed, 0x9B));
  return train_core(cfg, fold_id, train_segments, train_pairs, test_segments, test_pairs, eeg_channels, mel_bands,
                    on_epoch);
}

FoldResult run_fold(const TrainConfig& cfg, const FoldSplit& split, const std::vector<corpus::SentenceRecord>& records,
                    const EpochCallback& on_epoch) {
  validate(split);
  if (records.empty()) throw DataError("no sentence records");
  const auto all = sentence_segments(records);
  const auto train = select_subjects(all, split.train_subjects);
  const auto test = select_subjects(all, split.test_subjects);
  require_subjects(train, split.train_subjects, "training");
  require_subjects(test, split.test_subjects, "test");
  return train_and_evaluate(cfg, split.fold_id, train, test, static_cast<int>(records.front().eeg_feat.rows()),
                            static_cast<int>(records.front().mel_feat.rows()), on_epoch);
}

FoldResult baseline_sentence(TrainConfig cfg, const FoldSplit& split,
                             const std::vector<corpus::SentenceRecord>& records, const EpochCallback& on_epoch) {
  cfg.model = ModelKind::baseline;
  return run_fold(cfg, split, records, on_epoch);
}

std::vector<corpus::SentenceRecord> trial_streams(const std::vector<corpus::SentenceRecord>& records) {
  std::map<std::pair<std::string, int>, std::vector<const corpus::SentenceRecord*>> groups;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : records) {
    auto key = std::make_pair(r.subject_id, r.trial_id);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<corpus::SentenceRecord> out;
  for (const auto& key : order) {
    auto& parts = groups[key];
    std::stable_sort(parts.begin(), parts.end(),
                     [](const auto* a, const auto* b) { return a->sentence_index < b->sentence_index; });
    Eigen::Index total = 0;
    for (const auto* p : parts) total += p->eeg_feat.cols();
    corpus::SentenceRecord s;
    s.subject_id = key.first;
    s.trial_id = key.second;
    s.eeg_feat.resize(parts.front()->eeg_feat.rows(), total);
    s.mel_feat.resize(parts.front()->mel_feat.rows(), total);
    Eigen::Index at = 0;
    for (const auto* p : parts) {
      s.eeg_feat.middleCols(at, p->eeg_feat.cols()) = p->eeg_feat;
      s.mel_feat.middleCols(at, p->mel_feat.cols()) = p->mel_feat;
      at += p->eeg_feat.cols();
    }
    out.push_back(std::move(s));
  }
  return out;
}

WindowSet fixed_windows(const std::vector<corpus::SentenceRecord>& streams, const std::vector<std::string>& subjects,
                        std::size_t window_frames, std::size_t step_frames) {
  if (window_frames == 0 || step_frames == 0) throw ValidationError("window and step must be positive");
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  WindowSet out;
  for (const auto& stream : streams) {
    if (!wanted.count(stream.subject_id)) continue;
    const auto n = static_cast<std::size_t>(stream.eeg_feat.cols());
    if (n < 2 * window_frames) {
      log::warn("subject " + stream.subject_id + " trial " + std::to_string(stream.trial_id) +
                " is too short for two adjacent windows; skipped");
      continue;
    }
    std::map<std::size_t, std::size_t> at_start;
    auto segment_at = [&](std::size_t start, bool trainable) {
      if (auto it = at_start.find(start); it != at_start.end()) {
        out.segments[it->second].trainable = out.segments[it->second].trainable || trainable;
        return it->second;
      }
      Segment s;
      s.source = &stream;
      s.offset = static_cast<Eigen::Index>(start);
      s.length = static_cast<Eigen::Index>(window_frames);
      s.subject_id = stream.subject_id;
      s.trial_id = stream.trial_id;
      s.position = static_cast<int>(start);
      s.trainable = trainable;
      out.segments.push_back(std::move(s));
      at_start[start] = out.segments.size() - 1;
      return out.segments.size() - 1;
    };
    for (std::size_t start = 0; start + window_frames <= n; start += step_frames) {
      const std::size_t matched = segment_at(start, true);
      const std::size_t other = start + 2 * window_frames <= n ? start + window_frames : start - window_frames;
      out.pairs.push_back({matched, segment_at(other, false), MismatchStrategy::next_sentence});
    }
  }
  return out;
}

FoldResult baseline_fixed_window(TrainConfig cfg, const WindowConfig& window, const FoldSplit& split,
                                 const std::vector<corpus::SentenceRecord>& records, const EpochCallback& on_epoch) {
  cfg.model = ModelKind::baseline;
  validate(cfg);
  validate(split);
  if (!(window.window_s > 0.0) || !(window.test_step_s > 0.0) ||
      !(window.train_overlap >= 0.0 && window.train_overlap < 1.0)) {
    throw ValidationError("window length and step must be positive and overlap in [0, 1)");
  }
  if (records.empty()) throw DataError("no sentence records");
  const auto window_frames = static_cast<std::size_t>(std::lround(window.window_s * segmentation::kFrameRateHz));
  const auto train_step = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(static_cast<double>(window_frames) * (1.0 - window.train_overlap))));
  const auto test_step =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(window.test_step_s * segmentation::kFrameRateHz)));
  const encoder::EncoderConfig probe{};
  if (window_frames < probe.min_frames()) throw ValidationError("window is shorter than the encoder's receptive field");

  const auto streams = trial_streams(records);
  const WindowSet train = fixed_windows(streams, split.train_subjects, window_frames, train_step);
  const WindowSet test = fixed_windows(streams, split.test_subjects, window_frames, test_step);
  return train_core(cfg, split.fold_id, train.segments, train.pairs, test.segments, test.pairs,
                    static_cast<int>(records.front().eeg_feat.rows()),
                    static_cast<int>(records.front().mel_feat.rows()), on_epoch);
}

}  // namespace wbmm::mm
