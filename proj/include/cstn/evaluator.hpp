#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cstn/tensor.hpp"

namespace cstn {

// MAPE is a fraction (0.225 = 22.5%), RMSE is in demand units.  `entries` is
// the number of (prediction, truth) pairs that cleared the demand filter;
// both metrics pool over exactly that set.
struct MetricValues {
    double mape = 0.0;
    double rmse = 0.0;
    std::size_t entries = 0;
};

inline constexpr double kDefaultMinDemand = 5.0;

// Pooled entrywise metrics over aligned tensor sequences, counting only
// entries whose ground truth is >= min_demand.  Returns nullopt when nothing
// clears the filter -- an explicit "no signal", never a fake zero.
std::optional<MetricValues> od_metrics(const std::vector<Tensor>& preds,
                                       const std::vector<Tensor>& gts,
                                       double min_demand = kDefaultMinDemand);

// Same, after summing destination channels into per-cell origin totals.
std::optional<MetricValues> origin_metrics(const std::vector<Tensor>& preds,
                                           const std::vector<Tensor>& gts,
                                           double min_demand = kDefaultMinDemand);

// The k regions with the highest total origin demand over the given
// intervals; ties break toward the lower region index.  Sorted ascending.
std::vector<int> high_demand_subset(const std::vector<Tensor>& od_intervals, int k);

// OD metrics restricted to entries whose origin cell AND destination channel
// both lie in `regions`.
std::optional<MetricValues> od_metrics_subset(const std::vector<Tensor>& preds,
                                              const std::vector<Tensor>& gts,
                                              const std::vector<int>& regions,
                                              double min_demand = kDefaultMinDemand);

// Origin metrics restricted to cells in `regions`.
std::optional<MetricValues> origin_metrics_subset(const std::vector<Tensor>& preds,
                                                  const std::vector<Tensor>& gts,
                                                  const std::vector<int>& regions,
                                                  double min_demand = kDefaultMinDemand);

struct DaySplitRow {
    std::string name;  // monday..sunday, weekday, weekend
    std::optional<MetricValues> od;
    std::optional<MetricValues> origin;
    std::size_t intervals = 0;  // intervals contributing to this partition
};

// Nine rows: each day of week, then weekday (Mon-Fri) and weekend (Sat+Sun).
// `times` holds the target timestamp of each interval, aligned with preds/gts.
std::vector<DaySplitRow> day_split_report(const std::vector<Tensor>& preds,
                                          const std::vector<Tensor>& gts,
                                          const std::vector<std::int64_t>& times,
                                          double min_demand = kDefaultMinDemand);

// --- alignment glue ---

struct IntervalSeries;
struct SampleWindow;

// Flattens per-window predictions into aligned (prediction, raw truth,
// timestamp) triples; truth comes straight from the series counts.
struct AlignedPredictions {
    std::vector<Tensor> preds;
    std::vector<Tensor> gts;
    std::vector<std::int64_t> times;
};

AlignedPredictions align_with_truth(const std::vector<std::vector<Tensor>>& preds_per_window,
                                    const std::vector<SampleWindow>& windows,
                                    const IntervalSeries& series);

// --- report CSV ---

struct ReportRow {
    std::string subset;
    std::string mode;  // "od" or "origin"
    std::optional<MetricValues> values;
};

// Header subset,mode,mape,rmse,entries; MAPE stays a fraction and values keep
// full precision.  Empty metrics leave mape/rmse blank with entries 0.
void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows);

}  // namespace cstn
