#include "cstn/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cstn/errors.hpp"
#include "cstn/pipeline.hpp"
#include "cstn/timeutil.hpp"

namespace cstn {

namespace {

struct Accumulator {
    double ape_sum = 0.0;
    double se_sum = 0.0;
    std::size_t n = 0;

    void add(double pred, double gt, double min_demand) {
        if (gt < min_demand) return;  // one filter decides membership for both metrics
        ape_sum += std::abs(pred - gt) / gt;
        const double d = pred - gt;
        se_sum += d * d;
        ++n;
    }

    std::optional<MetricValues> result() const {
        if (n == 0) return std::nullopt;
        return MetricValues{ape_sum / static_cast<double>(n),
                            std::sqrt(se_sum / static_cast<double>(n)), n};
    }
};

void check_aligned(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("metrics: prediction/truth counts differ");
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (!preds[i].same_shape(gts[i]))
            throw std::invalid_argument("metrics: shape mismatch at interval " + std::to_string(i) +
                                        ": " + preds[i].shape_str() + " vs " + gts[i].shape_str());
}

void check_od_shape(const Tensor& t) {
    if (t.rank() != 3 || t.dim(0) != t.dim(1) * t.dim(2))
        throw std::invalid_argument("metrics: expected an [N, H, W] tensor with N = H*W, got " +
                                    t.shape_str());
}

std::vector<char> region_mask(const std::vector<int>& regions, int n_regions) {
    if (regions.empty()) throw std::invalid_argument("metrics: empty region subset");
    std::vector<char> mask(static_cast<std::size_t>(n_regions), 0);
    for (int r : regions) {
        if (r < 0 || r >= n_regions)
            throw std::invalid_argument("metrics: region index " + std::to_string(r) + " out of range");
        mask[static_cast<std::size_t>(r)] = 1;
    }
    return mask;
}

}  // namespace

std::optional<MetricValues> od_metrics(const std::vector<Tensor>& preds,
                                       const std::vector<Tensor>& gts, double min_demand) {
    check_aligned(preds, gts);
    Accumulator acc;
    for (std::size_t t = 0; t < preds.size(); ++t)
        for (std::size_t i = 0; i < preds[t].numel(); ++i) acc.add(preds[t][i], gts[t][i], min_demand);
    return acc.result();
}

std::optional<MetricValues> origin_metrics(const std::vector<Tensor>& preds,
                                           const std::vector<Tensor>& gts, double min_demand) {
    check_aligned(preds, gts);
    Accumulator acc;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        check_od_shape(preds[t]);
        const Tensor po = origin_demand(preds[t]);
        const Tensor go = origin_demand(gts[t]);
        for (std::size_t i = 0; i < po.numel(); ++i) acc.add(po[i], go[i], min_demand);
    }
    return acc.result();
}

std::vector<int> high_demand_subset(const std::vector<Tensor>& od_intervals, int k) {
    if (od_intervals.empty()) throw std::invalid_argument("high_demand_subset: no intervals");
    check_od_shape(od_intervals.front());
    const int N = od_intervals.front().dim(0);
    if (k < 1 || k > N)
        throw std::invalid_argument("high_demand_subset: k must lie in [1, " + std::to_string(N) + "]");
    std::vector<double> total(static_cast<std::size_t>(N), 0.0);
    for (const Tensor& od : od_intervals) {
        check_od_shape(od);
        if (od.dim(0) != N) throw std::invalid_argument("high_demand_subset: mixed grid sizes");
        const Tensor o = origin_demand(od);
        for (int s = 0; s < N; ++s) total[s] += o[s];
    }
    std::vector<int> idx(static_cast<std::size_t>(N));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return total[a] > total[b]; });
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::optional<MetricValues> od_metrics_subset(const std::vector<Tensor>& preds,
                                              const std::vector<Tensor>& gts,
                                              const std::vector<int>& regions, double min_demand) {
    check_aligned(preds, gts);
    Accumulator acc;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        check_od_shape(preds[t]);
        const int N = preds[t].dim(0);
        const std::vector<char> mask = region_mask(regions, N);
        for (int d = 0; d < N; ++d) {
            if (!mask[static_cast<std::size_t>(d)]) continue;
            for (int o = 0; o < N; ++o) {
                if (!mask[static_cast<std::size_t>(o)]) continue;
                const std::size_t i = static_cast<std::size_t>(d) * N + o;
                acc.add(preds[t][i], gts[t][i], min_demand);
            }
        }
    }
    return acc.result();
}

std::optional<MetricValues> origin_metrics_subset(const std::vector<Tensor>& preds,
                                                  const std::vector<Tensor>& gts,
                                                  const std::vector<int>& regions,
                                                  double min_demand) {
    check_aligned(preds, gts);
    Accumulator acc;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        check_od_shape(preds[t]);
        const int N = preds[t].dim(0);
        const std::vector<char> mask = region_mask(regions, N);
        const Tensor po = origin_demand(preds[t]);
        const Tensor go = origin_demand(gts[t]);
        for (int s = 0; s < N; ++s)
            if (mask[static_cast<std::size_t>(s)]) acc.add(po[s], go[s], min_demand);
    }
    return acc.result();
}

std::vector<DaySplitRow> day_split_report(const std::vector<Tensor>& preds,
                                          const std::vector<Tensor>& gts,
                                          const std::vector<std::int64_t>& times,
                                          double min_demand) {
    check_aligned(preds, gts);
    if (times.size() != preds.size())
        throw std::invalid_argument("day_split_report: timestamps not aligned with intervals");

    static const char* kNames[9] = {"monday", "tuesday",  "wednesday", "thursday", "friday",
                                    "saturday", "sunday", "weekday",   "weekend"};
    std::vector<Accumulator> od_acc(9), org_acc(9);
    std::vector<std::size_t> counts(9, 0);

    for (std::size_t t = 0; t < preds.size(); ++t) {
        check_od_shape(preds[t]);
        const int dow = day_of_week(times[t]);
        const int agg = dow >= 5 ? 8 : 7;  // weekend : weekday
        counts[static_cast<std::size_t>(dow)] += 1;
        counts[static_cast<std::size_t>(agg)] += 1;
        for (std::size_t i = 0; i < preds[t].numel(); ++i) {
            od_acc[static_cast<std::size_t>(dow)].add(preds[t][i], gts[t][i], min_demand);
            od_acc[static_cast<std::size_t>(agg)].add(preds[t][i], gts[t][i], min_demand);
        }
        const Tensor po = origin_demand(preds[t]);
        const Tensor go = origin_demand(gts[t]);
        for (std::size_t i = 0; i < po.numel(); ++i) {
            org_acc[static_cast<std::size_t>(dow)].add(po[i], go[i], min_demand);
            org_acc[static_cast<std::size_t>(agg)].add(po[i], go[i], min_demand);
        }
    }

    std::vector<DaySplitRow> rows;
    for (int b = 0; b < 9; ++b) {
        DaySplitRow row;
        row.name = kNames[b];
        row.od = od_acc[static_cast<std::size_t>(b)].result();
        row.origin = org_acc[static_cast<std::size_t>(b)].result();
        row.intervals = counts[static_cast<std::size_t>(b)];
        rows.push_back(std::move(row));
    }
    return rows;
}

AlignedPredictions align_with_truth(const std::vector<std::vector<Tensor>>& preds_per_window,
                                    const std::vector<SampleWindow>& windows,
                                    const IntervalSeries& series) {
    if (preds_per_window.size() != windows.size())
        throw std::invalid_argument("align_with_truth: prediction count does not match windows");
    AlignedPredictions out;
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const SampleWindow& win = windows[w];
        if (preds_per_window[w].size() != win.target_intervals.size())
            throw std::invalid_argument("align_with_truth: horizon mismatch at window " + std::to_string(w));
        for (std::size_t s = 0; s < preds_per_window[w].size(); ++s) {
            const int interval = win.target_intervals[s];
            out.preds.push_back(preds_per_window[w][s]);
            out.gts.push_back(series.od[static_cast<std::size_t>(interval)]);
            out.times.push_back(series.time_of(interval));
        }
    }
    return out;
}

void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw MissingInputError("cannot open '" + path + "' for writing");
    out << "subset,mode,mape,rmse,entries\n";
    char buf[64];
    for (const ReportRow& row : rows) {
        out << row.subset << ',' << row.mode << ',';
        if (row.values) {
            std::snprintf(buf, sizeof(buf), "%.17g", row.values->mape);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", row.values->rmse);
            out << buf << ',' << row.values->entries << '\n';
        } else {
            out << ",,0\n";
        }
    }
    if (!out) throw MissingInputError("short write to '" + path + "'");
}

}  // namespace cstn
