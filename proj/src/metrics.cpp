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

#include "flowcon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "flowcon/errors.hpp"
#include "flowcon/rng.hpp"
#include "flowcon/runtime.hpp"

namespace flowcon {

namespace {

void require_sets(std::span<const double> id, std::span<const double> ood) {
  if (id.empty() || ood.empty()) throw InvalidArgument("metric needs non-empty ID and OOD sets");
  for (double v : id) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite ID score");
  }
  for (double v : ood) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite OOD score");
  }
}

}  // namespace

double auroc(std::span<const double> id, std::span<const double> ood) {
  require_sets(id, ood);
  std::vector<double> sorted(ood.begin(), ood.end());
  std::sort(sorted.begin(), sorted.end());
  // Twice the Mann-Whitney count keeps the sum integral.
  std::uint64_t twice = 0;
  for (double v : id) {
    const auto [lo, hi] = std::equal_range(sorted.begin(), sorted.end(), v);
    twice += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) +
             static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice) /
         (2.0 * static_cast<double>(id.size()) * static_cast<double>(ood.size()));
}

double aupr(std::span<const double> id, std::span<const double> ood, Positive positive) {
  require_sets(id, ood);
  struct Item {
    double score;
    bool pos;
  };
  std::vector<Item> items;
  items.reserve(id.size() + ood.size());
  const bool id_pos = positive == Positive::kId;
  const double sign = id_pos ? 1.0 : -1.0;
  for (double v : id) items.push_back({sign * v, id_pos});
  for (double v : ood) items.push_back({sign * v, !id_pos});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score > b.score; });

  const double n_pos = static_cast<double>(id_pos ? id.size() : ood.size());
  std::size_t tp = 0, fp = 0, tp_prev = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      (items[j].pos ? tp : fp) += 1;
      ++j;
    }
    if (tp > tp_prev) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      area += static_cast<double>(tp - tp_prev) * precision;
      tp_prev = tp;
    }
    i = j;
  }
  // Dividing once keeps a perfect ranking at exactly 1.
  return area / n_pos;
}

double fpr_at_tpr(std::span<const double> id, std::span<const double> ood, double tpr_target) {
  require_sets(id, ood);
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
    throw InvalidArgument("tpr_target must be in (0, 1]");
  }
  std::vector<double> ids(id.begin(), id.end());
  std::sort(ids.begin(), ids.end(), std::greater<>());
  const double n = static_cast<double>(ids.size());
  double t = ids.back();
  for (std::size_t i = 0; i < ids.size();) {
    std::size_t j = i;
    while (j < ids.size() && ids[j] == ids[i]) ++j;
    if (static_cast<double>(j) / n >= tpr_target) {
      t = ids[i];
      break;
    }
    i = j;
  }
  const auto accepted = std::count_if(ood.begin(), ood.end(), [t](double v) { return v >= t; });
  return static_cast<double>(accepted) / static_cast<double>(ood.size());
}

OodMetrics compute_metrics(std::span<const double> id, std::span<const double> ood) {
  return {auroc(id, ood), aupr(id, ood, Positive::kId), aupr(id, ood, Positive::kOod),
          fpr_at_tpr(id, ood, 0.95)};
}

Subsample subsample_ood(const FeatureDataset& ood, std::size_t id_test_count, double ratio,
                        std::uint64_t seed, std::uint64_t index) {
  if (!(ratio > 0.0)) throw InvalidArgument("subsample ratio must be > 0");
  const auto want =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(id_test_count)));
  Subsample out;
  std::vector<std::size_t> idx(ood.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = substream(seed, "subsample", index);
  std::shuffle(idx.begin(), idx.end(), rng);
  if (want > ood.size()) {
    out.shortfall = true;
    warn("OOD set has " + std::to_string(ood.size()) + " rows, " + std::to_string(want) +
         " requested; using all");
  } else {
    idx.resize(want);
  }
  out.rows = ood.subset(idx);
  return out;
}

std::string Histogram::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "bin_left,bin_right,id_count,ood_count\n";
  for (std::size_t b = 0; b < bins(); ++b) {
    os << edges[b] << ',' << edges[b + 1] << ',' << id_counts[b] << ',' << ood_counts[b] << '\n';
  }
  return os.str();
}

Histogram histogram(std::span<const double> id, std::span<const double> ood, std::size_t bins) {
  if (bins == 0) throw InvalidArgument("histogram needs at least one bin");
  if (id.empty() && ood.empty()) throw InvalidArgument("histogram of no scores");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (auto set : {id, ood}) {
    for (double v : set) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges[bins] = hi;
  h.id_counts.assign(bins, 0);
  h.ood_counts.assign(bins, 0);
  auto bin_of = [&](double v) {
    const auto b = static_cast<std::size_t>(std::floor((v - lo) / (hi - lo) * bins));
    return std::min(b, bins - 1);
  };
  for (double v : id) ++h.id_counts[bin_of(v)];
  for (double v : ood) ++h.ood_counts[bin_of(v)];
  return h;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["auroc"] = metrics.auroc;
  j["aupr_s"] = metrics.aupr_s;
  j["aupr_e"] = metrics.aupr_e;
  j["fpr95"] = metrics.fpr95;
  j["id_count"] = id_count;
  j["ood_count"] = ood_count;
  j["ood_available"] = ood_available;
  j["seed"] = seed;
  j["ratio"] = ratio;
  j["warnings"] = warnings;
  return j;
}

std::vector<double> score_values(std::span<const OodScore> scores) {
  std::vector<double> v(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) v[i] = scores[i].score;
  return v;
}

EvalReport evaluate_scores(std::string name, std::span<const double> id,
                           std::span<const double> ood, const EvalOptions& opts) {
  EvalReport r;
  r.name = std::move(name);
  r.metrics = {auroc(id, ood), aupr(id, ood, Positive::kId), aupr(id, ood, Positive::kOod),
               fpr_at_tpr(id, ood, opts.tpr_target)};
  r.id_count = id.size();
  r.ood_count = ood.size();
  r.ood_available = ood.size();
  r.seed = opts.seed;
  r.ratio = opts.ratio;
  r.hist = histogram(id, ood, opts.bins);
  return r;
}

SuiteResult evaluate_suite(const FlowModel& model, const ClassPrototypes& protos,
                           const FeatureDataset& id_test,
                           const std::vector<std::pair<std::string, FeatureDataset>>& ood_sets,
                           const EvalOptions& opts) {
  if (id_test.empty()) throw InvalidArgument("evaluate_suite: empty ID test set");
  const std::vector<double> id = score_values(score_dataset(model, protos, id_test));

  SuiteResult out;
  for (std::size_t s = 0; s < ood_sets.size(); ++s) {
    const auto& [name, ood] = ood_sets[s];
    if (ood.empty()) {
      out.errors.push_back("OOD set '" + name + "' is empty; skipped");
      warn(out.errors.back());
      continue;
    }
    Subsample sub = subsample_ood(ood, id_test.size(), opts.ratio, opts.seed, s);
    if (sub.rows.empty()) {
      out.errors.push_back("OOD set '" + name + "' subsample is empty; skipped");
      warn(out.errors.back());
      continue;
    }
    const std::vector<double> o = score_values(score_dataset(model, protos, sub.rows));
    EvalReport r = evaluate_scores(name, id, o, opts);
    r.ood_available = ood.size();
    if (sub.shortfall) {
      r.warnings.push_back("requested " +
                           std::to_string(static_cast<std::size_t>(
                               std::floor(opts.ratio * static_cast<double>(id_test.size())))) +
                           " OOD rows, only " + std::to_string(ood.size()) + " available");
    }
    out.per_set.push_back(std::move(r));
  }

  EvalReport& m = out.mean;
  m.name = "mean";
  m.seed = opts.seed;
  m.ratio = opts.ratio;
  m.id_count = id_test.size();
  m.warnings = out.errors;
  if (out.per_set.empty()) {
    m.warnings.push_back("no OOD set evaluated");
    return out;
  }
  for (const auto& r : out.per_set) {
    m.metrics.auroc += r.metrics.auroc;
    m.metrics.aupr_s += r.metrics.aupr_s;
    m.metrics.aupr_e += r.metrics.aupr_e;
    m.metrics.fpr95 += r.metrics.fpr95;
    m.ood_count += r.ood_count;
    m.ood_available += r.ood_available;
  }
  const double n = static_cast<double>(out.per_set.size());
  m.metrics.auroc /= n;
  m.metrics.aupr_s /= n;
  m.metrics.aupr_e /= n;
  m.metrics.fpr95 /= n;
  return out;
}

}  // namespace flowcon
