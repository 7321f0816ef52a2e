#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "augmetrics/errors.hpp"
#include "augmetrics/harness.hpp"
#include "augmetrics/textio.hpp"

namespace augmetrics {

namespace fs = std::filesystem;

namespace {

struct CurveRow {
  std::string step, mean_val_acc, mean_test_acc, lift, lift_sem;
};

std::map<std::string, std::vector<CurveRow>> read_switchoff_csv(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::map<std::string, std::vector<CurveRow>> curves;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != "policy_label,step,mean_val_acc,mean_test_acc,lift,lift_sem,pairs") {
        throw FormatError(path.string() + ":1: unexpected header");
      }
      continue;
    }
    if (trim(line).empty()) continue;
    const auto cells = split_csv_record(line);
    if (!cells || cells->size() != 7 || !parse_int((*cells)[1])) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    const auto &c = *cells;
    curves[c[0]].push_back({c[1], c[2], c[3], c[4], c[5]});
  }
  return curves;
}

std::string pct(const std::optional<double> &v, int precision) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << 100.0 * *v;
  return s.str();
}

std::string fixed(const std::optional<double> &v, int precision) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << *v;
  return s.str();
}

std::string count(const std::optional<std::int64_t> &v) {
  return v ? std::to_string(*v) : "-";
}

std::string table(std::vector<MetricsRecord> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const MetricsRecord &a, const MetricsRecord &b) {
    if (a.test_acc.has_value() != b.test_acc.has_value()) return a.test_acc.has_value();
    return a.test_acc && *a.test_acc > *b.test_acc;
  });
  const std::vector<std::string> head = {"policy",  "test_acc%", "+-",       "affinity_pp",
                                         "+-",      "div_loss",  "entropy",  "steps_97",
                                         "lift_pp", "best_step", "seeds"};
  std::vector<std::vector<std::string>> cells;
  for (const auto &r : rows) {
    cells.push_back({r.policy_label, pct(r.test_acc, 2), pct(r.test_acc_sem, 2),
                     pct(r.affinity, 2), pct(r.affinity_sem, 2), fixed(r.diversity_loss, 4),
                     fixed(r.diversity_entropy, 4), count(r.steps_to_threshold),
                     pct(r.switch_off_lift, 2), count(r.best_switch_step),
                     std::to_string(r.num_seeds)});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto &row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string> &row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        out << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    out << '\n';
  };
  emit(head);
  for (const auto &row : cells) emit(row);
  return out.str();
}

} // namespace

ReportOutputs report(const fs::path &results_dir, const fs::path &out_dir) {
  const auto rows = read_results_csv(results_dir / "results.csv");
  fs::create_directories(out_dir);
  ReportOutputs out;

  std::vector<const MetricsRecord *> points;
  for (const auto &r : rows)
    if (r.affinity && r.diversity_loss && r.test_acc) points.push_back(&r);
  const bool with_entropy =
      !points.empty() && std::all_of(points.begin(), points.end(), [](const MetricsRecord *r) {
        return r->diversity_entropy.has_value();
      });
  std::ostringstream scatter;
  scatter << "policy_label\taffinity_pp\tdiversity_loss\ttest_acc_pct";
  if (with_entropy) scatter << "\tdiversity_entropy";
  scatter << '\n';
  for (const auto *r : points) {
    scatter << r->policy_label << '\t' << format_double(100.0 * *r->affinity) << '\t'
            << format_double(*r->diversity_loss) << '\t' << format_double(100.0 * *r->test_acc);
    if (with_entropy) scatter << '\t' << format_double(*r->diversity_entropy);
    scatter << '\n';
  }
  out.scatter = out_dir / "scatter.tsv";
  write_file_atomic(out.scatter, scatter.str());

  const fs::path switch_file = results_dir / "switchoff.csv";
  if (fs::exists(switch_file)) {
    for (const auto &[label, curve] : read_switchoff_csv(switch_file)) {
      std::ostringstream s;
      s << "step\tmean_val_acc\tmean_test_acc\tlift\tlift_sem\n";
      for (const auto &c : curve) {
        s << c.step << '\t' << c.mean_val_acc << '\t' << c.mean_test_acc << '\t' << c.lift
          << '\t' << c.lift_sem << '\n';
      }
      const fs::path p = out_dir / "curves" / (policy_slug(label) + ".tsv");
      write_file_atomic(p, s.str());
      out.switch_off_curves.push_back(p);
    }
  }

  out.table_text = table(rows);
  out.table = out_dir / "summary.txt";
  write_file_atomic(out.table, out.table_text);
  return out;
}

} // namespace augmetrics
