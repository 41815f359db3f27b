#pragma once

#include <kdro/dp.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace kdro::io {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double x);

/// CSV with header `x,a,x_next`, one row per sample in dataset order. Scalar states only.
void write_dataset_csv(std::ostream& os, const TransitionDataset<double>& data);
TransitionDataset<double> read_dataset_csv(std::istream& is);

/// CSV `stage,x,value` with every stage's grid values, stage-major.
void write_values_csv(std::ostream& os, const std::vector<ValueFunction<double>>& values);

/// CSV `stage,x,action` with one row per (stage, grid point).
void write_policy_csv(std::ostream& os, const PolicyTable<double>& policy);

}  // namespace kdro::io
