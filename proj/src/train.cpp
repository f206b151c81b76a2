// Copyright 2026 The FlowCon Authors.
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

#include "flowcon/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "flowcon/binary_io.hpp"
#include "flowcon/checkpoint.hpp"
#include "flowcon/errors.hpp"

namespace flowcon {

using nd::Tensor;

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidArgument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw InvalidArgument("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
}

AdamState AdamState::zeros(std::span<Tensor* const> params, const AdamConfig& cfg) {
  AdamState s;
  s.cfg = cfg;
  for (const Tensor* p : params) {
    s.m.push_back(Tensor::zeros_like(*p));
    s.v.push_back(Tensor::zeros_like(*p));
  }
  return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw InvalidArgument("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i]->shape() || state.m[i].shape() != params[i]->shape() ||
        state.v[i].shape() != params[i]->shape()) {
      throw InvalidArgument("adam_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  const AdamConfig& c = state.cfg;
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i]->data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k] + c.weight_decay * theta[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      theta[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
  ++state.step;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (batch_size < 2) throw InvalidArgument("batch_size must be >= 2");
  loss.validate();
  optimizer.validate();
}

BatchResult batch_loss_and_grads(const FlowModel& model, const FeatureDataset& ds,
                                 std::span<const std::size_t> indices, const LossConfig& cfg) {
  if (ds.dim != model.dim) throw InvalidArgument("dataset dim != model dim");
  const std::size_t b = indices.size();
  const std::size_t d = model.dim;
  Tensor x({b, d});
  std::vector<std::uint32_t> labels(b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto row = ds.row(indices[r]);
    auto out = x.row(r);
    for (std::size_t j = 0; j < d; ++j) out[j] = row[j];
    labels[r] = ds.labels[indices[r]];
    if (labels[r] == kUnlabeled) throw InvalidArgument("training rows must be labeled");
  }

  nd::Graph g;
  const nd::NodeId xn = g.constant(std::move(x));
  const FlowGraph fg = build_flow_graph(g, model, xn);
  const LossGraph lg = build_loss_graph(g, fg.z, fg.logdet, fg.mu, fg.log_sigma, labels, d, cfg);
  nd::LeafBindings bindings;
  bind_parameters(fg, model, bindings, true);
  g.evaluate(bindings, lg.total);

  BatchResult out;
  out.terms = {g.value(lg.total).item(), g.value(lg.l_con).item(), g.value(lg.l_flow).item()};
  nd::Gradients grads = g.gradients(lg.total);
  for (nd::NodeId leaf : fg.param_leaves) out.grads.push_back(std::move(grads.at(leaf)));
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t rows, std::size_t batch_size,
                                                    Rng& rng) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < rows; start += batch_size) {
    const std::size_t end = std::min(rows, start + batch_size);
    if (end - start < 2) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

EpochStats train_epoch(FlowModel& model, const FeatureDataset& ds, const TrainConfig& cfg,
                       AdamState& state, Rng& rng, std::size_t epoch,
                       const std::function<void(const StepRecord&)>& on_step) {
  if (ds.dim != model.dim) {
    throw InvalidArgument("dataset dim " + std::to_string(ds.dim) + " != model dim " +
                          std::to_string(model.dim));
  }
  const auto batches = epoch_batches(ds.size(), cfg.batch_size, rng);
  std::vector<Tensor*> params;
  for (auto& p : parameters(model)) params.push_back(p.tensor);

  EpochStats stats;
  stats.epoch = epoch;
  std::size_t rows = 0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    BatchResult r;
    try {
      r = batch_loss_and_grads(model, ds, batches[bi], cfg.loss);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) +
                         ": " + e.what());
    }
    adam_step(params, r.grads, state);
    for (const Tensor* p : params) {
      if (!p->all_finite()) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) +
                           ": parameters became non-finite");
      }
    }
    const double w = static_cast<double>(batches[bi].size());
    stats.mean.total += w * r.terms.total;
    stats.mean.l_con += w * r.terms.l_con;
    stats.mean.l_flow += w * r.terms.l_flow;
    rows += batches[bi].size();
    ++stats.steps;
    if (on_step) on_step({epoch, state.step, r.terms});
  }
  if (rows > 0) {
    stats.mean.total /= static_cast<double>(rows);
    stats.mean.l_con /= static_cast<double>(rows);
    stats.mean.l_flow /= static_cast<double>(rows);
  }
  return stats;
}

std::vector<std::uint8_t> encode_train_state(const FlowModel& model, const TrainState& st) {
  TensorContainer c;
  c.magic = "FCOS";
  c.dim = static_cast<std::uint32_t>(model.dim);
  c.blocks = static_cast<std::uint32_t>(model.num_blocks());
  c.hidden = static_cast<std::uint32_t>(model.hidden);
  const AdamState& a = st.adam;
  // Counters are stored as f64 scalars; exact below 2^53.
  c.entries.push_back({"adam.step", Tensor::scalar(static_cast<double>(a.step))});
  c.entries.push_back({"adam.lr", Tensor::scalar(a.cfg.lr)});
  c.entries.push_back({"adam.beta1", Tensor::scalar(a.cfg.beta1)});
  c.entries.push_back({"adam.beta2", Tensor::scalar(a.cfg.beta2)});
  c.entries.push_back({"adam.eps", Tensor::scalar(a.cfg.eps)});
  c.entries.push_back({"adam.weight_decay", Tensor::scalar(a.cfg.weight_decay)});
  c.entries.push_back({"train.epoch", Tensor::scalar(static_cast<double>(st.epochs_done))});
  c.entries.push_back({"train.seed_lo", Tensor::scalar(static_cast<double>(st.seed & 0xFFFFFFFFu))});
  c.entries.push_back({"train.seed_hi", Tensor::scalar(static_cast<double>(st.seed >> 32))});
  const auto params = parameters(model);
  if (a.m.size() != params.size() || a.v.size() != params.size()) {
    throw InvalidArgument("optimizer state does not match the model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) c.entries.push_back({"m/" + params[i].name, a.m[i]});
  for (std::size_t i = 0; i < params.size(); ++i) c.entries.push_back({"v/" + params[i].name, a.v[i]});
  return encode_container(c);
}

TrainState decode_train_state(std::span<const std::uint8_t> bytes, const FlowModel& model) {
  const TensorContainer c = decode_container(bytes, "FCOS");
  if (c.dim != model.dim || c.blocks != model.num_blocks() || c.hidden != model.hidden) {
    throw FormatError("optimizer state was written for a different model shape", 8);
  }
  TrainState st;
  st.adam.step = static_cast<std::uint64_t>(c.get("adam.step").item());
  st.adam.cfg.lr = c.get("adam.lr").item();
  st.adam.cfg.beta1 = c.get("adam.beta1").item();
  st.adam.cfg.beta2 = c.get("adam.beta2").item();
  st.adam.cfg.eps = c.get("adam.eps").item();
  st.adam.cfg.weight_decay = c.get("adam.weight_decay").item();
  st.epochs_done = static_cast<std::uint64_t>(c.get("train.epoch").item());
  st.seed = static_cast<std::uint64_t>(c.get("train.seed_lo").item()) |
            (static_cast<std::uint64_t>(c.get("train.seed_hi").item()) << 32);
  for (const auto& p : parameters(model)) {
    for (const char* prefix : {"m/", "v/"}) {
      const Tensor& t = c.get(prefix + p.name);
      if (t.shape() != p.tensor->shape()) {
        throw FormatError("optimizer entry " + std::string(prefix) + p.name + " has wrong shape", 0);
      }
      (prefix[0] == 'm' ? st.adam.m : st.adam.v).push_back(t);
    }
  }
  return st;
}

void save_train_state(const FlowModel& model, const TrainState& st, const std::string& path) {
  io::write_file(path, encode_train_state(model, st));
}

TrainState load_train_state(const std::string& path, const FlowModel& model) {
  return decode_train_state(io::read_file(path), model);
}

namespace {

nlohmann::ordered_json config_json(const FlowModel& model, const TrainConfig& cfg) {
  nlohmann::ordered_json j;
  j["d"] = model.dim;
  j["K"] = model.num_blocks();
  j["h"] = model.hidden;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["seed"] = cfg.seed;
  j["tau1"] = cfg.loss.tau1;
  j["tau2"] = cfg.loss.tau2;
  j["lambda"] = cfg.loss.lambda;
  j["contrastive"] = cfg.loss.contrastive;
  j["exponent_clamp"] = cfg.loss.exponent_clamp;
  j["lr"] = cfg.optimizer.lr;
  j["beta1"] = cfg.optimizer.beta1;
  j["beta2"] = cfg.optimizer.beta2;
  j["eps"] = cfg.optimizer.eps;
  j["weight_decay"] = cfg.optimizer.weight_decay;
  return j;
}

void write_record(std::ostream* log, const char* kind, std::size_t epoch, std::uint64_t step,
                  const LossTerms& t, double wallclock_ms) {
  if (!log) return;
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["epoch"] = epoch;
  j["step"] = step;
  j["l_total"] = t.total;
  j["l_con"] = t.l_con;
  j["l_flow"] = t.l_flow;
  j["wallclock_ms"] = wallclock_ms;
  *log << j.dump() << '\n';
}

}  // namespace

FitResult fit(FlowModel& model, const FeatureDataset& ds, const TrainConfig& cfg,
              const FitOptions& opts) {
  cfg.validate();
  if (ds.size() < 2) throw InvalidArgument("training needs at least 2 rows");
  if (ds.dim != model.dim) {
    throw InvalidArgument("dataset dim " + std::to_string(ds.dim) + " != model dim " +
                          std::to_string(model.dim));
  }

  FitResult res;
  if (opts.resume) {
    res.state = *opts.resume;
    if (res.state.seed != cfg.seed) throw InvalidArgument("resume state was trained with another seed");
  } else {
    std::vector<Tensor*> params;
    for (auto& p : parameters(model)) params.push_back(p.tensor);
    res.state.adam = AdamState::zeros(params, cfg.optimizer);
    res.state.seed = cfg.seed;
  }

  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  };
  if (opts.log) {
    nlohmann::ordered_json header;
    header["config"] = config_json(model, cfg);
    *opts.log << header.dump() << '\n';
  }
  std::function<void(const StepRecord&)> on_step;
  if (opts.log && cfg.log_every > 0) {
    on_step = [&](const StepRecord& r) {
      if (r.step % cfg.log_every == 0) {
        write_record(opts.log, "step", r.epoch, r.step, r.terms, elapsed_ms());
      }
    };
  }

  auto checkpoint = [&] {
    if (opts.checkpoint_path.empty()) return;
    save_checkpoint(model, opts.checkpoint_path);
    save_train_state(model, res.state, opts.checkpoint_path + ".fcos");
  };

  for (std::size_t e = res.state.epochs_done + 1; e <= cfg.epochs; ++e) {
    Rng rng = substream(cfg.seed, "shuffle", e);
    EpochStats s = train_epoch(model, ds, cfg, res.state.adam, rng, e, on_step);
    res.state.epochs_done = e;
    write_record(opts.log, "epoch", e, res.state.adam.step, s.mean, elapsed_ms());
    res.epochs.push_back(s);
    if (e == cfg.epochs || (cfg.checkpoint_every > 0 && e % cfg.checkpoint_every == 0)) {
      checkpoint();
    }
  }
  if (opts.log) opts.log->flush();
  return res;
}

}  // namespace flowcon
