#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "raceproxy/person.hpp"
#include "raceproxy/tables.hpp"

namespace raceproxy::ml {

// Training design matrix: one feature row, label, and group keys per record.
struct LabelledMatrix {
    Layout layout = Layout::Base;
    std::size_t n_features = kBaseFeatures;
    std::vector<double> x;  // row-major, rows() * n_features
    std::vector<int> y;     // 0..4
    std::vector<std::string> state;
    std::vector<std::string> tract;

    std::size_t rows() const { return y.size(); }

    std::span<const double> row(std::size_t i) const {
        return {x.data() + i * n_features, n_features};
    }

    void add_row(std::span<const double> features, int label, std::string st, std::string tr);

    // New matrix with the given rows, in the given order.
    LabelledMatrix select(std::span<const std::size_t> indices) const;

    Vec5 base_rates() const;
};

// Assembles feature rows for every labelled record (unlabelled records are
// skipped); row order follows the dataset.
LabelledMatrix build_matrix(const Dataset& d, const TableSet& tables, Layout layout);

}  // namespace raceproxy::ml
