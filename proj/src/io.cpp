#include <kdro/io.hpp>

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace kdro::io {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& field, std::size_t line) {
  double v = 0;
  const char* first = field.data();
  const char* last = first + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw std::invalid_argument("dataset csv line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

}  // namespace

void write_dataset_csv(std::ostream& os, const TransitionDataset<double>& data) {
  data.validate();
  if (data.states.rows() != 1) throw std::invalid_argument("dataset csv: scalar states only");
  os << "x,a,x_next\n";
  for (Eigen::Index i = 0; i < data.size(); ++i)
    os << format_double(data.states(0, i)) << ',' << format_double(data.actions(i)) << ','
       << format_double(data.next_states(0, i)) << '\n';
}

TransitionDataset<double> read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("dataset csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,a,x_next") throw std::invalid_argument("dataset csv: expected header 'x,a,x_next'");

  std::vector<double> xs, as, ns;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[3];
    for (auto& field : f)
      if (!std::getline(ss, field, ','))
        throw std::invalid_argument("dataset csv line " + std::to_string(lineno) + ": expected 3 fields");
    std::string extra;
    if (std::getline(ss, extra, ','))
      throw std::invalid_argument("dataset csv line " + std::to_string(lineno) + ": expected 3 fields");
    xs.push_back(parse_double(f[0], lineno));
    as.push_back(parse_double(f[1], lineno));
    ns.push_back(parse_double(f[2], lineno));
  }
  const auto m = static_cast<Eigen::Index>(xs.size());
  TransitionDataset<double> data{PointSet<double>(1, m), Vector<double>(m), PointSet<double>(1, m)};
  for (Eigen::Index i = 0; i < m; ++i) {
    data.states(0, i) = xs[static_cast<std::size_t>(i)];
    data.actions(i) = as[static_cast<std::size_t>(i)];
    data.next_states(0, i) = ns[static_cast<std::size_t>(i)];
  }
  data.validate();
  return data;
}

void write_values_csv(std::ostream& os, const std::vector<ValueFunction<double>>& values) {
  os << "stage,x,value\n";
  for (const auto& v : values)
    for (Eigen::Index i = 0; i < v.grid.size(); ++i)
      os << v.stage << ',' << format_double(v.grid.point(i)) << ',' << format_double(v.values(i)) << '\n';
}

void write_policy_csv(std::ostream& os, const PolicyTable<double>& policy) {
  os << "stage,x,action\n";
  for (Eigen::Index l = 0; l < policy.stages(); ++l)
    for (Eigen::Index i = 0; i < policy.grid.size(); ++i)
      os << l << ',' << format_double(policy.grid.point(i)) << ','
         << format_double(policy.actions(policy.choice(l, i))) << '\n';
}

}  // namespace kdro::io
