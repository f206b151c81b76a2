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

#include "flowcon/oodscore.hpp"

#include <cmath>

#include "flowcon/binary_io.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/loss.hpp"
#include "flowcon/runtime.hpp"

namespace flowcon {

using nd::Tensor;

void ClassPrototypes::validate() const {
  const std::size_t n = classes.size();
  if (mu.shape() != nd::Shape{n, dim} || sigma.shape() != nd::Shape{n, dim} ||
      counts.size() != n) {
    throw ShapeError("prototype tables disagree with k=" + std::to_string(n) +
                     ", d=" + std::to_string(dim));
  }
  for (double s : sigma.data()) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("prototype sigma must be > 0");
  }
  for (std::size_t c = 0; c < n; ++c) {
    if (counts[c] == 0) throw InvalidArgument("prototype with zero samples");
    if (c > 0 && classes[c] <= classes[c - 1]) {
      throw InvalidArgument("prototype classes must be strictly increasing");
    }
  }
}

ClassPrototypes prototypes_from_samples(std::span<const std::uint32_t> labels, const Tensor& mu,
                                        const Tensor& sigma, std::uint32_t num_classes) {
  const std::size_t n = labels.size();
  if (mu.rank() != 2 || mu.rows() != n || sigma.shape() != mu.shape()) {
    throw ShapeError("prototypes: mu and sigma must be [N, d] with N = #labels");
  }
  const std::size_t d = mu.cols();
  std::vector<std::vector<double>> mu_sum(num_classes, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> sigma_sum(num_classes, std::vector<double>(d, 0.0));
  std::vector<std::uint32_t> count(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = labels[i];
    if (c == kUnlabeled) continue;
    if (c >= num_classes) throw InvalidArgument("prototypes: label out of range");
    ++count[c];
    for (std::size_t j = 0; j < d; ++j) {
      mu_sum[c][j] += mu.at(i, j);
      sigma_sum[c][j] += sigma.at(i, j);
    }
  }

  ClassPrototypes p;
  p.dim = d;
  std::vector<double> mu_rows, sigma_rows;
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    if (count[c] == 0) {
      warn("class " + std::to_string(c) + " has no samples; prototype omitted");
      continue;
    }
    p.classes.push_back(c);
    p.counts.push_back(count[c]);
    for (std::size_t j = 0; j < d; ++j) {
      mu_rows.push_back(mu_sum[c][j] / count[c]);
      sigma_rows.push_back(sigma_sum[c][j] / count[c]);
    }
  }
  if (p.classes.empty()) throw InvalidArgument("prototypes: no labeled samples");
  p.mu = Tensor({p.k(), d}, std::move(mu_rows));
  p.sigma = Tensor({p.k(), d}, std::move(sigma_rows));
  p.validate();
  return p;
}

ClassPrototypes compute_prototypes(const FlowModel& model, const FeatureDataset& ds) {
  if (ds.empty()) throw InvalidArgument("compute_prototypes: empty dataset");
  if (ds.dim != model.dim) {
    throw InvalidArgument("compute_prototypes: dataset dim " + std::to_string(ds.dim) +
                          " != model dim " + std::to_string(model.dim));
  }
  const std::size_t n = ds.size();
  const std::size_t d = model.dim;
  Tensor mu({n, d});
  Tensor sigma({n, d});
  const auto ni = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (worker_threads() > 1)
  for (std::ptrdiff_t i = 0; i < ni; ++i) {
    const auto out = flow_forward(model, ds.row_f64(static_cast<std::size_t>(i)));
    auto mrow = mu.row(static_cast<std::size_t>(i));
    auto srow = sigma.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < d; ++j) {
      mrow[j] = out.mu[j];
      srow[j] = std::exp(out.log_sigma[j]);
    }
  }
  return prototypes_from_samples(ds.labels, mu, sigma, ds.num_classes);
}

OodScore score_latent(const ClassPrototypes& protos, std::span<const double> z) {
  if (z.size() != protos.dim) {
    throw InvalidArgument("score: input has " + std::to_string(z.size()) +
                          " dims, prototypes have " + std::to_string(protos.dim));
  }
  OodScore best;
  std::vector<double> log_sigma(protos.dim);
  for (std::size_t c = 0; c < protos.k(); ++c) {
    const auto s = protos.sigma.row(c);
    for (std::size_t j = 0; j < protos.dim; ++j) log_sigma[j] = std::log(s[j]);
    const double ll = gaussian_logpdf(z, protos.mu.row(c), log_sigma);
    if (c == 0 || ll > best.score) best = {ll, protos.classes[c]};
  }
  return best;
}

OodScore ood_score(const FlowModel& model, const ClassPrototypes& protos,
                   std::span<const double> x) {
  if (x.size() != model.dim) {
    throw InvalidArgument("score: input has " + std::to_string(x.size()) +
                          " dims, model has " + std::to_string(model.dim));
  }
  return score_latent(protos, flow_forward(model, x).z_flow);
}

std::uint32_t classify(const FlowModel& model, const ClassPrototypes& protos,
                       std::span<const double> x) {
  return ood_score(model, protos, x).label;
}

namespace serial {
std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds) {
  std::vector<OodScore> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out[i] = ood_score(model, protos, ds.row_f64(i));
  return out;
}
}  // namespace serial

namespace parallel {
std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds) {
  if (ds.dim != model.dim) throw InvalidArgument("score: dataset dim != model dim");
  std::vector<OodScore> out(ds.size());
  const auto n = static_cast<std::ptrdiff_t>(ds.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    out[row] = score_latent(protos, flow_forward(model, ds.row_f64(row)).z_flow);
  }
  return out;
}
}  // namespace parallel

std::vector<OodScore> score_dataset(const FlowModel& model, const ClassPrototypes& protos,
                                    const FeatureDataset& ds) {
  if (ds.dim != model.dim) throw InvalidArgument("score: dataset dim != model dim");
  return worker_threads() > 1 ? parallel::score_dataset(model, protos, ds)
                              : serial::score_dataset(model, protos, ds);
}

Accuracy accuracy(const FeatureDataset& ds, std::span<const OodScore> scores) {
  if (scores.size() != ds.size()) throw ShapeError("accuracy: score count != row count");
  Accuracy a;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == kUnlabeled) {
      ++a.unlabeled;
      continue;
    }
    ++a.labeled;
    if (scores[i].label == ds.labels[i]) ++a.correct;
  }
  if (a.labeled == 0) throw InvalidArgument("no labeled rows");
  a.accuracy = static_cast<double>(a.correct) / static_cast<double>(a.labeled);
  return a;
}

std::vector<std::uint8_t> encode_prototypes(const ClassPrototypes& p) {
  p.validate();
  io::ByteWriter w;
  w.magic("FCPT");
  w.u32(kPrototypeFormatVersion);
  w.u32(static_cast<std::uint32_t>(p.k()));
  w.u32(static_cast<std::uint32_t>(p.dim));
  for (std::size_t c = 0; c < p.k(); ++c) {
    w.u32(p.classes[c]);
    for (double v : p.mu.row(c)) w.f64(v);
    for (double v : p.sigma.row(c)) w.f64(v);
    w.u32(p.counts[c]);
  }
  return std::move(w).finish();
}

ClassPrototypes decode_prototypes(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic("FCPT");
  const auto version_at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kPrototypeFormatVersion) {
    throw FormatError("unsupported FCPT version " + std::to_string(version), version_at);
  }
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  ClassPrototypes p;
  p.dim = d;
  p.mu = Tensor({k, d});
  p.sigma = Tensor({k, d});
  for (std::uint32_t c = 0; c < k; ++c) {
    p.classes.push_back(r.u32());
    for (double& v : p.mu.row(c)) v = r.f64();
    for (double& v : p.sigma.row(c)) v = r.f64();
    p.counts.push_back(r.u32());
  }
  r.expect_end();
  try {
    p.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid prototypes: ") + e.what(), 0);
  }
  return p;
}

void save_prototypes(const ClassPrototypes& p, const std::string& path) {
  io::write_file(path, encode_prototypes(p));
}

ClassPrototypes load_prototypes(const std::string& path) {
  return decode_prototypes(io::read_file(path));
}

}  // namespace flowcon
