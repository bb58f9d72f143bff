// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dereverb/metrics/blind_t60.hpp"
#include "dereverb/metrics/bootstrap.hpp"
#include "dereverb/metrics/fwsegsnr.hpp"
#include "dereverb/metrics/sdr.hpp"

namespace dereverb {

struct EvalPair {
  std::string id;
  Waveform reverberant;
  Waveform reference;
};

struct UtteranceMetrics {
  std::string id;
  std::optional<double> fwsegsnr_db;
  std::optional<double> sdr_db;
  std::optional<double> estimated_t60_s;
};

struct AggregateMetric {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double half_width = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;    // utterances that contributed
  std::size_t missing = 0;  // utterances whose metric failed
};

/// One row of the evaluation table ("model" or "no model").
struct MetricsReport {
  std::string system;
  std::vector<UtteranceMetrics> utterances;
  AggregateMetric fwsegsnr_db, sdr_db, estimated_t60_s;
  std::size_t utterance_count() const { return utterances.size(); }
};

struct EvaluationResult {
  MetricsReport model;
  MetricsReport no_model;
};

struct EvalOptions {
  std::size_t bootstrap_resamples = 10000;
  std::uint64_t bootstrap_seed = 0;
};

namespace detail {

template <class F>
std::optional<double> try_metric(F&& f) {
  try {
    const double v = f();
    if (std::isfinite(v)) return v;
  } catch (const Error&) {
  }
  return std::nullopt;
}

inline AggregateMetric aggregate(const std::vector<UtteranceMetrics>& rows,
                                 std::optional<double> UtteranceMetrics::*field,
                                 const EvalOptions& o) {
  std::vector<double> v;
  AggregateMetric a;
  for (const auto& r : rows) {
    if (r.*field)
      v.push_back(*(r.*field));
    else
      ++a.missing;
  }
  a.count = v.size();
  // Sorting makes the bootstrap, not just the mean, independent of utterance order.
  std::sort(v.begin(), v.end());
  if (v.size() == 1) {
    a.mean = v[0];
    a.half_width = 0;
  } else if (v.size() >= 2) {
    const auto ci = bootstrap_ci(v, 0.95, o.bootstrap_resamples, o.bootstrap_seed);
    a.mean = ci.mean;
    a.half_width = ci.half_width;
  }
  return a;
}

}  // namespace detail

inline UtteranceMetrics score_utterance(const std::string& id, const Waveform& reference,
                                        const Waveform& estimate) {
  UtteranceMetrics m;
  m.id = id;
  m.fwsegsnr_db = detail::try_metric([&] { return fwsegsnr(reference, estimate); });
  m.sdr_db = detail::try_metric([&] { return sdr(reference, estimate); });
  m.estimated_t60_s = detail::try_metric([&] { return estimate_t60_blind(estimate); });
  return m;
}

inline MetricsReport summarize(std::string system, std::vector<UtteranceMetrics> rows,
                               const EvalOptions& o = {}) {
  MetricsReport r;
  r.system = std::move(system);
  r.utterances = std::move(rows);
  r.fwsegsnr_db = detail::aggregate(r.utterances, &UtteranceMetrics::fwsegsnr_db, o);
  r.sdr_db = detail::aggregate(r.utterances, &UtteranceMetrics::sdr_db, o);
  r.estimated_t60_s = detail::aggregate(r.utterances, &UtteranceMetrics::estimated_t60_s, o);
  return r;
}

using Enhancer = std::function<Waveform(const Waveform&)>;

/// Scores `enhance(reverberant)` and the unprocessed input against each reference.
inline EvaluationResult evaluate_model(const Enhancer& enhance, const std::vector<EvalPair>& eval_set,
                                       const EvalOptions& o = {}) {
  if (eval_set.empty()) throw InvalidArgument("evaluate_model: empty evaluation set");
  std::vector<UtteranceMetrics> model_rows, base_rows;
  for (const auto& p : eval_set) {
    base_rows.push_back(score_utterance(p.id, p.reference, p.reverberant));
    model_rows.push_back(score_utterance(p.id, p.reference, enhance(p.reverberant)));
  }
  return {summarize("model", std::move(model_rows), o), summarize("no model", std::move(base_rows), o)};
}

namespace detail {
inline std::string fmt(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}
inline std::string fmt(double v) { return fmt(std::isfinite(v) ? std::optional(v) : std::nullopt); }
}  // namespace detail

/// Per-utterance rows for every system followed by one aggregate row per system.
inline std::string report_csv(const EvaluationResult& r) {
  std::ostringstream os;
  os << "system,utterance,fwsegsnr_db,sdr_db,estimated_t60_s\n";
  for (const auto* rep : {&r.model, &r.no_model})
    for (const auto& u : rep->utterances)
      os << rep->system << ',' << u.id << ',' << detail::fmt(u.fwsegsnr_db) << ','
         << detail::fmt(u.sdr_db) << ',' << detail::fmt(u.estimated_t60_s) << '\n';
  os << "\nsystem,fwsegsnr_db,fwsegsnr_ci95,sdr_db,sdr_ci95,estimated_t60_s,estimated_t60_ci95,"
        "utterances,missing_fwsegsnr,missing_sdr,missing_t60\n";
  for (const auto* rep : {&r.model, &r.no_model})
    os << rep->system << ',' << detail::fmt(rep->fwsegsnr_db.mean) << ','
       << detail::fmt(rep->fwsegsnr_db.half_width) << ',' << detail::fmt(rep->sdr_db.mean) << ','
       << detail::fmt(rep->sdr_db.half_width) << ',' << detail::fmt(rep->estimated_t60_s.mean) << ','
       << detail::fmt(rep->estimated_t60_s.half_width) << ',' << rep->utterance_count() << ','
       << rep->fwsegsnr_db.missing << ',' << rep->sdr_db.missing << ','
       << rep->estimated_t60_s.missing << '\n';
  return os.str();
}

inline std::string report_summary(const EvaluationResult& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %18s %18s %18s\n", "", "FWSegSNR [dB]", "SDR [dB]", "T60 [s]");
  os << line;
  for (const auto* rep : {&r.model, &r.no_model}) {
    auto cell = [](const AggregateMetric& a) {
      char b[40];
      std::snprintf(b, sizeof b, "%.2f +/- %.2f", a.mean, a.half_width);
      return std::string(b);
    };
    std::snprintf(line, sizeof line, "%-10s %18s %18s %18s\n", rep->system.c_str(),
                  cell(rep->fwsegsnr_db).c_str(), cell(rep->sdr_db).c_str(),
                  cell(rep->estimated_t60_s).c_str());
    os << line;
  }
  std::snprintf(line, sizeof line, "%zu utterances\n", r.model.utterance_count());
  os << line;
  return os.str();
}

}  // namespace dereverb
