#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aol/bench/config.hpp"
#include "aol/errors.hpp"
#include "aol/format.hpp"

namespace aol::bench {

struct PlotOutputs {
  std::string cumulative;
  std::string budget;
  std::string bounds;
  int traces = 0;
  int summaries = 0;
  int bound_files = 0;
};

namespace detail {

inline std::vector<std::string> csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double number(const std::string& s, const std::string& file, int row) {
  try {
    std::size_t n = 0;
    double v = std::stod(s, &n);
    if (n != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw parse_error(file + ": row " + std::to_string(row) + ": '" + s + "' is not a number");
  }
}

}  // namespace detail

/// Appends `step,cumulative` pairs of one trace file to `os`, prefixed by the
/// trace name. Malformed rows raise parse_error with the row number.
inline int append_trace_curve(std::ostream& os, const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw parse_error("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line)) return 0;
  auto header = detail::csv_row(line);
  if (header.size() < 7 || header[0] != "step" || header[6] != "cumulative")
    throw parse_error(file.string() + ": row 1: not an episode trace header");
  // <experiment>/traces/<variant>_seed<N>.csv -> <experiment>/<variant>_seed<N>
  std::string name = file.stem().string();
  if (file.parent_path().filename() == "traces" && file.parent_path().has_parent_path())
    name = file.parent_path().parent_path().filename().string() + "/" + name;
  int row = 1, rows = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = detail::csv_row(line);
    if (cells.size() != header.size())
      throw parse_error(file.string() + ": row " + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " columns, found " + std::to_string(cells.size()));
    for (const auto& c : cells) detail::number(c, file.string(), row);
    const double step = detail::number(cells[0], file.string(), row);
    const double cum = detail::number(cells[6], file.string(), row);
    os << name << "," << fmt9(step) << "," << fmt9(cum) << "\n";
    ++rows;
  }
  return rows;
}

inline int append_bounds(std::ostream& os, const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw parse_error("cannot open " + file.string());
  std::string line;
  if (!std::getline(is, line)) return 0;
  if (line != "action,lb,ub,baseline_q") throw parse_error(file.string() + ": row 1: not a bound-distribution header");
  int row = 1, rows = 0;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    auto cells = detail::csv_row(line);
    if (cells.size() != 4) throw parse_error(file.string() + ": row " + std::to_string(row) + ": expected 4 columns");
    for (const auto& c : cells) detail::number(c, file.string(), row);
    os << line << "\n";
    ++rows;
  }
  return rows;
}

/**
 * Deterministic conversion of run outputs under `input` into plot tables:
 * cumulative reward per step for every trace, mean return per budget for every
 * summary, and the concatenated bound distributions. Files are visited in
 * path order.
 */
inline PlotOutputs emit_plot_data(const std::filesystem::path& input, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(input)) throw parse_error("plot-data: '" + input.string() + "' does not exist");
  std::vector<fs::path> files;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::recursive_directory_iterator(input))
      if (e.is_regular_file()) files.push_back(e.path());
  } else {
    files.push_back(input);
  }
  std::sort(files.begin(), files.end());

  fs::create_directories(out_dir);
  PlotOutputs out;
  out.cumulative = (out_dir / "cumulative_reward.csv").string();
  out.budget = (out_dir / "reward_vs_budget.csv").string();
  out.bounds = (out_dir / "bound_distribution.csv").string();
  std::ofstream cum(out.cumulative), bud(out.budget), bnd(out.bounds);
  cum << "trace,step,cumulative\n";
  bud << "experiment,variant,budget_ms,simulations,mean_return,std_return\n";
  bnd << "action,lb,ub,baseline_q\n";
  for (const auto& f : files) {
    const auto fname = f.filename().string();
    if (f.extension() == ".csv" && fname == "bounds.csv") {
      append_bounds(bnd, f);
      ++out.bound_files;
    } else if (f.extension() == ".csv" && f.parent_path().filename() == "traces") {
      append_trace_curve(cum, f);
      ++out.traces;
    } else if (fname == "summary.json") {
      std::ifstream is(f);
      nlohmann::json j;
      try {
        is >> j;
      } catch (const std::exception& e) {
        throw parse_error(f.string() + ": " + e.what());
      }
      const auto& c = j.at("config");
      for (const char* v : {"treatment", "baseline"}) {
        if (!j.contains(v)) continue;
        const auto& r = j.at(v).at("returns");
        bud << c.at("name").get<std::string>() << "," << v << "," << c.at("budget_ms").get<std::string>() << ","
            << c.at("simulations").get<long>() << "," << r.at("mean").get<std::string>() << ","
            << r.at("std").get<std::string>() << "\n";
      }
      ++out.summaries;
    }
  }
  return out;
}

}  // namespace aol::bench
