// Copyright 2026 The MemeFier-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "memefier/training.hpp"

#include "memefier/config_file.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace memefier {

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(lr > 0.0, "lr must be > 0");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr_drop_factor > 0.0, "lr_drop_factor must be > 0");
  require(lr_drop_at >= 0, "lr_drop_at must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps must be > 0");
  require(grad_clip >= 0.0, "grad_clip must be >= 0");
  require(report_every >= 1, "report_every must be >= 1");
}

int TrainConfig::drop_epoch() const {
  return lr_drop_at > 0 ? lr_drop_at : (epochs + 1) / 2;
}

double TrainConfig::lr_at(int epoch) const {
  return epoch <= drop_epoch() ? lr : lr / lr_drop_factor;
}

std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
  std::map<std::string, std::string> kv;
  kv["train.lr"] = format_double(c.lr);
  kv["train.epochs"] = std::to_string(c.epochs);
  kv["train.batch_size"] = std::to_string(c.batch_size);
  kv["train.lr_drop_factor"] = format_double(c.lr_drop_factor);
  kv["train.lr_drop_at"] = std::to_string(c.lr_drop_at);
  kv["train.beta1"] = format_double(c.beta1);
  kv["train.beta2"] = format_double(c.beta2);
  kv["train.adam_eps"] = format_double(c.adam_eps);
  kv["train.grad_clip"] = format_double(c.grad_clip);
  kv["train.eval_train"] = c.eval_train ? "true" : "false";
  kv["train.report_every"] = std::to_string(c.report_every);
  kv["train.seed"] = std::to_string(c.seed);
  return kv;
}

void apply_key_values(TrainConfig& c, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key.rfind("train.", 0) != 0) continue;
    const std::string_view k = std::string_view(key).substr(6);
    if (k == "lr") c.lr = parse_double(key, value);
    else if (k == "epochs") c.epochs = parse_int(key, value);
    else if (k == "batch_size") c.batch_size = parse_int(key, value);
    else if (k == "lr_drop_factor") c.lr_drop_factor = parse_double(key, value);
    else if (k == "lr_drop_at") c.lr_drop_at = parse_int(key, value);
    else if (k == "beta1") c.beta1 = parse_double(key, value);
    else if (k == "beta2") c.beta2 = parse_double(key, value);
    else if (k == "adam_eps") c.adam_eps = parse_double(key, value);
    else if (k == "grad_clip") c.grad_clip = parse_double(key, value);
    else if (k == "eval_train") c.eval_train = parse_bool(key, value);
    else if (k == "report_every") c.report_every = parse_int(key, value);
    else if (k == "seed") c.seed = parse_u64(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

namespace {

void put_metrics(std::ostringstream& out, const std::string& prefix, const MetricsReport& m) {
  for (const auto& [task, t] : m.tasks) {
    out << ' ' << prefix << '.' << task << ".accuracy=" << format_double(t.accuracy);
    if (t.auc) out << ' ' << prefix << '.' << task << ".auc=" << format_double(*t.auc);
    out << ' ' << prefix << '.' << task << ".macro_f1=" << format_double(t.macro_f1);
  }
}

int argmax(const ad::Matrix<float>& row) {
  Eigen::Index best = 0;
  row.row(0).maxCoeff(&best);
  return static_cast<int>(best);
}

// Adam with bias correction; moments live alongside the parameter set.
class Adam {
 public:
  Adam(const ParameterSet<float>& params, const TrainConfig& c)
      : beta1_(static_cast<float>(c.beta1)), beta2_(static_cast<float>(c.beta2)),
        eps_(static_cast<float>(c.adam_eps)) {
    for (const auto& p : params) {
      m_.push_back(ad::Matrix<float>::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(ad::Matrix<float>::Zero(p.value.rows(), p.value.cols()));
    }
  }

  void step(ParameterSet<float>& params, const std::vector<ad::Matrix<float>>& grads, double lr) {
    ++t_;
    const float c1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float c2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    const auto rate = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& m = m_[i];
      auto& v = v_[i];
      const auto& g = grads[i];
      m = beta1_ * m + (1.0f - beta1_) * g;
      v = beta2_ * v + (1.0f - beta2_) * g.cwiseProduct(g);
      auto& w = params[i].value;
      w.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
  }

 private:
  float beta1_, beta2_, eps_;
  std::vector<ad::Matrix<float>> m_, v_;
  long t_ = 0;
};

}  // namespace

std::string format_history(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  for (const auto& r : history) {
    out << "epoch=" << r.epoch << " lr=" << format_double(r.lr)
        << " train.total=" << format_double(r.train.total)
        << " train.task=" << format_double(r.train.task)
        << " train.caption=" << format_double(r.train.caption)
        << " val.total=" << format_double(r.val.total) << " val.task=" << format_double(r.val.task)
        << " val.caption=" << format_double(r.val.caption);
    put_metrics(out, "val", r.val_metrics);
    if (r.train_metrics) put_metrics(out, "train", *r.train_metrics);
    out << '\n';
  }
  return out.str();
}

Evaluation evaluate(const MemeFier<float>& model, const DatasetManifest& manifest,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: no samples");
  const auto& heads = model.config().heads;
  struct Collected {
    std::vector<double> scores;
    std::vector<int> predicted, truth;
    std::vector<std::vector<int>> predicted_sets, truth_sets;
  };
  std::map<std::string, Collected> per_task;
  Evaluation ev;
  for (std::size_t idx : indices) {
    const auto& sample = manifest.samples.at(idx);
    const auto out = model.predict(sample);
    const auto parts = combined_loss<float>(heads, out, sample.labels, sample.caption_ids,
                                            model.config().alpha);
    ev.loss.total += parts.total;
    ev.loss.task += parts.task;
    ev.loss.caption += parts.caption;
    for (const auto& head : heads) {
      auto& c = per_task[head.task];
      const auto& probs = out.head_scores.at(head.task).probabilities;
      const auto& label = sample.labels.at(head.task);
      switch (head.kind) {
        case HeadKind::kBinary:
          c.scores.push_back(probs(0, 0));
          c.predicted.push_back(probs(0, 0) >= 0.5f ? 1 : 0);
          c.truth.push_back(label.at(0));
          break;
        case HeadKind::kMulticlass:
          c.predicted.push_back(argmax(probs));
          c.truth.push_back(label.at(0));
          break;
        case HeadKind::kMultilabel: {
          std::vector<int> p(static_cast<std::size_t>(head.classes));
          for (int j = 0; j < head.classes; ++j) p[static_cast<std::size_t>(j)] = probs(0, j) >= 0.5f ? 1 : 0;
          c.predicted_sets.push_back(std::move(p));
          c.truth_sets.emplace_back(label.begin(), label.end());
          break;
        }
      }
    }
  }
  const double n = static_cast<double>(indices.size());
  ev.loss.total /= n;
  ev.loss.task /= n;
  ev.loss.caption /= n;
  ev.metrics.sample_count = indices.size();
  for (const auto& head : heads) {
    const auto& c = per_task[head.task];
    TaskMetrics m;
    if (head.kind == HeadKind::kMultilabel) {
      m.accuracy = exact_match_accuracy(c.predicted_sets, c.truth_sets);
      m.macro_f1 = multilabel_macro_f1(c.predicted_sets, c.truth_sets);
    } else {
      m.accuracy = accuracy(c.predicted, c.truth);
      m.macro_f1 = macro_f1(c.predicted, c.truth, head.kind == HeadKind::kBinary ? 2 : head.classes);
      if (head.kind == HeadKind::kBinary) {
        const bool both = std::find(c.truth.begin(), c.truth.end(), 0) != c.truth.end() &&
                          std::find(c.truth.begin(), c.truth.end(), 1) != c.truth.end();
        if (both) m.auc = roc_auc(c.scores, c.truth);
      }
    }
    ev.metrics.tasks[head.task] = m;
  }
  return ev;
}

TrainResult train(ModelConfig model_config, const TrainConfig& tc, const DatasetManifest& manifest,
                  const EpochCallback& on_epoch) {
  tc.validate();
  model_config.adopt_manifest(manifest);
  model_config.validate();
  const auto train_idx = manifest.indices(Split::kTrain);
  const auto val_idx = manifest.indices(Split::kVal);
  if (train_idx.empty()) throw std::invalid_argument("train: manifest has no train samples");
  if (val_idx.empty()) throw std::invalid_argument("train: manifest has no val samples");

  MemeFier<float> model(model_config);
  std::mt19937_64 rng(tc.seed);
  Adam adam(model.parameters(), tc);

  auto& params = model.parameters();
  std::vector<ad::Matrix<float>> grads;
  for (const auto& p : params) grads.push_back(ad::Matrix<float>::Zero(p.value.rows(), p.value.cols()));

  TrainResult result{model, model, 0, 0.0, {}};
  std::vector<std::size_t> order = train_idx;
  ForwardOptions<float> options;
  options.training = true;
  options.rng = &rng;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = tc.lr_at(epoch);
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      for (auto& g : grads) g.setZero();
      double batch_total = 0;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& sample = manifest.samples[order[i]];
        ad::Tape<float> tape;
        const auto vars = model.forward(tape, sample, options);
        const auto loss = model.loss(tape, vars, sample);
        tape.backward(loss.total);
        tape.for_each_parameter_grad([&](std::size_t idx, const ad::Matrix<float>& g) { grads[idx] += g; });
        const double total = tape.value(loss.total)(0, 0);
        batch_total += total;
        rec.train.total += total;
        rec.train.task += tape.value(loss.task)(0, 0);
        if (loss.caption) rec.train.caption += tape.value(*loss.caption)(0, 0);
      }
      if (!std::isfinite(batch_total)) {
        throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                            " (non-finite loss " + format_double(batch_total) + ")");
      }
      const float inv = 1.0f / static_cast<float>(stop - start);
      double norm2 = 0;
      for (auto& g : grads) {
        g *= inv;
        norm2 += static_cast<double>(g.squaredNorm());
      }
      if (tc.grad_clip > 0.0 && std::sqrt(norm2) > tc.grad_clip) {
        const auto f = static_cast<float>(tc.grad_clip / std::sqrt(norm2));
        for (auto& g : grads) g *= f;
      }
      adam.step(params, grads, rec.lr);
    }
    const double n = static_cast<double>(order.size());
    rec.train.total /= n;
    rec.train.task /= n;
    rec.train.caption /= n;

    const Evaluation val = evaluate(model, manifest, val_idx);
    rec.val = val.loss;
    rec.val_metrics = val.metrics;
    if (!std::isfinite(rec.val.total)) {
      throw TrainingError("training diverged at epoch " + std::to_string(epoch) +
                          " (non-finite validation loss)");
    }
    if (tc.eval_train) rec.train_metrics = evaluate(model, manifest, train_idx).metrics;

    const double score = val.metrics.score();
    if (epoch == 1 || score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      result.best_model = model;
    }
    result.history.push_back(rec);
    if (on_epoch && (epoch % tc.report_every == 0 || epoch == tc.epochs)) on_epoch(rec);
  }
  result.final_model = model;
  return result;
}

}  // namespace memefier
