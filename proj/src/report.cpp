#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "prime/errors.hpp"
#include "prime/harness.hpp"

namespace fs = std::filesystem;

namespace prime {

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  if (v.empty()) return a;
  double sum = 0;
  for (double x : v) sum += x;
  a.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return a;
  double ss = 0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return a;
}

std::vector<std::string> MetricsReport::variants() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.variant) == out.end()) out.push_back(r.variant);
  return out;
}

std::vector<double> MetricsReport::success_by_seed(const std::string& variant) const {
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.variant == variant) out.push_back(r.success_rate);
  return out;
}

const ParseRow* MetricsReport::parse(const std::string& method) const {
  for (const auto& p : parses)
    if (p.method == method) return &p;
  return nullptr;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

struct Metric {
  const char* name;
  double (*get)(const PolicyRow&);
};

const Metric kPolicyMetrics[] = {
    {"success_rate", [](const PolicyRow& r) { return r.success_rate; }},
    {"mean_primitives", [](const PolicyRow& r) { return r.mean_primitives; }},
    {"failed_grasps", [](const PolicyRow& r) { return static_cast<double>(r.failed_grasps); }},
    {"grasp_retries", [](const PolicyRow& r) { return static_cast<double>(r.grasp_retries); }},
    {"grasp_retries_adjusted", [](const PolicyRow& r) { return static_cast<double>(r.grasp_retries_adjusted); }},
};

}  // namespace

void write_report(const MetricsReport& r, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root / "plots");
  for (const auto& e : fs::directory_iterator(root / "plots")) fs::remove(e.path());

  std::ostringstream m;
  m << "section,name,seed,metric,value\n";
  m << "run,task,all,name," << r.task << "\n";
  m << "idm,classifier,all,holdout_accuracy," << num(r.idm_holdout_accuracy) << "\n";
  m << "idm,dataset,all,samples," << r.dataset_size << "\n";
  for (const auto& p : r.parses) {
    m << "parse," << p.method << ",all,replay_success," << num(p.replay_success) << "\n";
    m << "parse," << p.method << ",all,mean_seq_len," << num(p.mean_seq_len) << "\n";
    m << "parse," << p.method << ",all,mean_demo_len," << num(p.mean_demo_len) << "\n";
    m << "parse," << p.method << ",all,compression," << num(p.compression()) << "\n";
    m << "parse," << p.method << ",all,other_segments," << p.other_segments << "\n";
  }
  m << "augment,dp,all,disagreement," << num(r.augment_disagreement) << "\n";
  for (const auto& row : r.rows)
    for (const auto& metric : kPolicyMetrics)
      m << "policy," << row.variant << "," << row.seed << "," << metric.name << "," << num(metric.get(row)) << "\n";
  for (const auto& v : r.variants())
    for (const auto& metric : kPolicyMetrics) {
      std::vector<double> vals;
      for (const auto& row : r.rows)
        if (row.variant == v) vals.push_back(metric.get(row));
      const Aggregate a = aggregate(vals);
      m << "policy," << v << ",mean," << metric.name << "," << num(a.mean) << "\n";
      m << "policy," << v << ",std," << metric.name << "," << num(a.stddev) << "\n";
    }
  write_file(root / "metrics.csv", m.str());

  std::ostringstream t;
  t << "stage,seconds\n";
  for (const auto& [k, v] : r.timings) t << k << "," << num(v) << "\n";
  write_file(root / "timings.csv", t.str());

  for (const auto& v : r.variants())
    for (const auto& metric : kPolicyMetrics) {
      std::ostringstream p;
      p << "x,y\n";
      for (const auto& row : r.rows)
        if (row.variant == v) p << row.seed << "," << num(metric.get(row)) << "\n";
      write_file(root / "plots" / (std::string(metric.name) + "__" + v + ".csv"), p.str());
    }
  {
    std::ostringstream p;
    p << "x,y\n";
    for (const auto& pr : r.parses) p << num(pr.mean_demo_len) << "," << num(pr.mean_seq_len) << "\n";
    write_file(root / "plots" / "seq_len_vs_demo_len.csv", p.str());
  }
}

MetricsReport read_report(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "metrics.csv");
  if (!in) throw IoError("cannot open " + (root / "metrics.csv").string());
  MetricsReport r;
  std::string line;
  std::getline(in, line);
  if (line != "section,name,seed,metric,value") throw CorruptFile("metrics.csv: unexpected header");
  auto parse_row = [&](const std::string& method) -> ParseRow& {
    for (auto& p : r.parses)
      if (p.method == method) return p;
    r.parses.push_back({method});
    return r.parses.back();
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line, ',');
    if (c.size() != 5) throw CorruptFile("metrics.csv: malformed line: " + line);
    const std::string &section = c[0], &name = c[1], &seed = c[2], &metric = c[3], &value = c[4];
    try {
      if (section == "run") {
        r.task = value;
      } else if (section == "idm") {
        if (metric == "holdout_accuracy") r.idm_holdout_accuracy = std::stod(value);
        if (metric == "samples") r.dataset_size = std::stoull(value);
      } else if (section == "parse") {
        ParseRow& p = parse_row(name);
        if (metric == "replay_success") p.replay_success = std::stod(value);
        if (metric == "mean_seq_len") p.mean_seq_len = std::stod(value);
        if (metric == "mean_demo_len") p.mean_demo_len = std::stod(value);
        if (metric == "other_segments") p.other_segments = std::stoull(value);
      } else if (section == "augment") {
        r.augment_disagreement = std::stod(value);
      } else if (section == "policy") {
        if (seed == "mean" || seed == "std") continue;
        const int k = std::stoi(seed);
        auto it = std::find_if(r.rows.begin(), r.rows.end(),
                               [&](const PolicyRow& row) { return row.variant == name && row.seed == k; });
        if (it == r.rows.end()) {
          r.rows.push_back({name, k});
          it = r.rows.end() - 1;
        }
        const double v = std::stod(value);
        if (metric == "success_rate") it->success_rate = v;
        if (metric == "mean_primitives") it->mean_primitives = v;
        if (metric == "failed_grasps") it->failed_grasps = static_cast<int>(v);
        if (metric == "grasp_retries") it->grasp_retries = static_cast<int>(v);
        if (metric == "grasp_retries_adjusted") it->grasp_retries_adjusted = static_cast<int>(v);
      } else {
        throw CorruptFile("metrics.csv: unknown section " + section);
      }
    } catch (const std::logic_error&) {
      throw CorruptFile("metrics.csv: bad number in line: " + line);
    }
  }
  std::ifstream tin(root / "timings.csv");
  if (tin) {
    std::getline(tin, line);
    while (std::getline(tin, line)) {
      const auto c = split(line, ',');
      if (c.size() == 2) r.timings[c[0]] = std::stod(c[1]);
    }
  }
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::ostringstream o;
  char buf[160];
  o << "task " << r.task << "\n";
  std::snprintf(buf, sizeof buf, "idm held-out accuracy %.4f (%zu samples)\n", r.idm_holdout_accuracy,
                r.dataset_size);
  o << buf;
  for (const auto& p : r.parses) {
    std::snprintf(buf, sizeof buf, "parse %-6s replay %.3f  seq/demo %.2f/%.1f (%.4f)  other %zu\n", p.method.c_str(),
                  p.replay_success, p.mean_seq_len, p.mean_demo_len, p.compression(), p.other_segments);
    o << buf;
  }
  std::snprintf(buf, sizeof buf, "augmentation type disagreement %.3f\n", r.augment_disagreement);
  o << buf;
  o << "variant        success (mean +- std)   per seed\n";
  for (const auto& v : r.variants()) {
    const auto s = r.success_by_seed(v);
    const Aggregate a = aggregate(s);
    std::snprintf(buf, sizeof buf, "%-14s %.3f +- %.3f          ", v.c_str(), a.mean, a.stddev);
    o << buf;
    for (double x : s) {
      std::snprintf(buf, sizeof buf, " %.2f", x);
      o << buf;
    }
    o << "\n";
  }
  int failed = 0, retries = 0, adjusted = 0;
  for (const auto& row : r.rows)
    if (row.variant == "full") {
      failed += row.failed_grasps;
      retries += row.grasp_retries;
      adjusted += row.grasp_retries_adjusted;
    }
  std::snprintf(buf, sizeof buf, "full policy after a failed grasp: %d observed, %d retried Grasp, %d with new parameters\n",
                failed, retries, adjusted);
  o << buf;
  return o.str();
}

}  // namespace prime
