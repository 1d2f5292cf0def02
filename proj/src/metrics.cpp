#include "firecast/metrics.hpp"

#include <algorithm>

namespace firecast {

double average_precision(std::vector<ScoredItem> items) {
  if (items.empty()) throw DataError("average_precision: empty scored set");
  long long n_pos = 0;
  for (const auto& it : items) n_pos += it.label ? 1 : 0;
  if (n_pos == 0) throw DataError("average_precision: no positive labels");

  std::sort(items.begin(), items.end(),
            [](const ScoredItem& a, const ScoredItem& b) { return a.score > b.score; });

  double ap = 0.0;
  double recall_prev = 0.0;
  long long tp = 0, fp = 0;
  size_t i = 0;
  while (i < items.size()) {
    size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      if (items[j].label) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

static void check_history_args(const std::vector<std::vector<uint8_t>>& history, int target_year,
                               int period) {
  if (target_year < 1 || target_year > static_cast<int>(history.size())) {
    throw DataError("naive baseline: target year has no preceding history");
  }
  for (int y = 0; y < target_year; ++y) {
    if (period < 0 || period >= static_cast<int>(history[static_cast<size_t>(y)].size())) {
      throw DataError("naive baseline: period out of range");
    }
  }
}

int naive_any_baseline(const std::vector<std::vector<uint8_t>>& history, int target_year,
                       int period) {
  check_history_args(history, target_year, period);
  for (int y = 0; y < target_year; ++y) {
    if (history[static_cast<size_t>(y)][static_cast<size_t>(period)]) return 1;
  }
  return 0;
}

int naive_majority_baseline(const std::vector<std::vector<uint8_t>>& history, int target_year,
                            int period) {
  check_history_args(history, target_year, period);
  int fire_years = 0;
  for (int y = 0; y < target_year; ++y) {
    fire_years += history[static_cast<size_t>(y)][static_cast<size_t>(period)] ? 1 : 0;
  }
  return fire_years > target_year - fire_years ? 1 : 0;
}

Baseline baseline_from_name(const std::string& name) {
  if (name == "naive-any") return Baseline::Any;
  if (name == "naive-majority") return Baseline::Majority;
  throw UsageError("unknown baseline: " + name + " (expected naive-any or naive-majority)");
}

std::string baseline_name(Baseline b) {
  return b == Baseline::Any ? "naive-any" : "naive-majority";
}

std::vector<ScoredItem> score_samples_with_baseline(Baseline b, const PreparedCube& pc,
                                                    const SampleSpec& spec,
                                                    std::span<const SampleRef> refs) {
  const CubeHeader& h = pc.cube.header;
  std::vector<ScoredItem> out;
  out.reserve(refs.size());

  // History matrices are per cell; refs arrive cell-major, so cache the last.
  int cached_lat = -1, cached_lon = -1;
  std::vector<std::vector<uint8_t>> history;

  for (const SampleRef& ref : refs) {
    const int t_label = ref.cell.t_idx + spec.h;
    const int target_year = time_to_year(h, t_label);
    const int period = time_to_period(h, t_label);

    if (ref.cell.lat_idx != cached_lat || ref.cell.lon_idx != cached_lon) {
      cached_lat = ref.cell.lat_idx;
      cached_lon = ref.cell.lon_idx;
      history.clear();
      const int last_year = time_to_year(h, h.time_len - 1);
      for (int year = h.t0_year; year <= last_year; ++year) {
        std::vector<uint8_t> row(static_cast<size_t>(h.steps_per_year), 0);
        for (int p = 0; p < h.steps_per_year; ++p) {
          const int t = year_period_to_time(h, year, p);
          if (t >= 0) row[static_cast<size_t>(p)] = pc.label_at(t, cached_lat, cached_lon);
        }
        history.push_back(std::move(row));
      }
    }

    const int year_row = target_year - h.t0_year;
    const int score = b == Baseline::Any ? naive_any_baseline(history, year_row, period)
                                         : naive_majority_baseline(history, year_row, period);
    out.push_back({static_cast<double>(score), ref.label});
  }
  return out;
}

EvalReport evaluate_scored(const EvalMeta& meta, const std::vector<ScoredItem>& scored) {
  EvalReport report;
  report.meta = meta;
  for (const auto& item : scored) {
    if (item.label) {
      ++report.n_pos;
    } else {
      ++report.n_neg;
    }
  }
  report.auprc = average_precision(scored);
  return report;
}

std::string eval_csv_header() { return "model,ts,h,r,k,split,auprc,n_pos,n_neg,seed,status"; }

std::string eval_csv_row(const EvalReport& r) {
  std::string row = r.meta.model;
  row += "," + std::to_string(r.meta.ts);
  row += "," + std::to_string(r.meta.h);
  row += "," + std::to_string(r.meta.r);
  row += "," + std::to_string(r.meta.k);
  row += "," + r.meta.split;
  row += "," + fmt_g17(r.auprc);
  row += "," + std::to_string(r.n_pos);
  row += "," + std::to_string(r.n_neg);
  row += "," + std::to_string(r.meta.seed);
  row += "," + r.status;
  return row;
}

}  // namespace firecast
