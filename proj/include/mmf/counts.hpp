#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mmf/error.hpp"

namespace mmf {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Hosts x taxa count table with cached row totals.
class CountMatrix {
  public:
    CountMatrix() = default;

    /// Validates counts (non-negative, every row total >= 1) and labels
    /// (unique taxon names, one per column). Empty host ids are numbered.
    CountMatrix(IntMatrix x, std::vector<std::string> taxon_names, std::vector<std::string> host_ids = {},
                std::vector<std::string> host_labels = {})
        : x_(std::move(x)), taxon_names_(std::move(taxon_names)), host_ids_(std::move(host_ids)),
          host_labels_(std::move(host_labels)) {
        if (static_cast<Eigen::Index>(taxon_names_.size()) != x_.cols())
            throw ValidationError("count matrix: one taxon name per column required");
        if (std::set<std::string>(taxon_names_.begin(), taxon_names_.end()).size() != taxon_names_.size())
            throw ValidationError("count matrix: taxon names must be unique");
        if (host_ids_.empty())
            for (Eigen::Index i = 0; i < x_.rows(); ++i) host_ids_.push_back("host" + std::to_string(i + 1));
        if (static_cast<Eigen::Index>(host_ids_.size()) != x_.rows())
            throw ValidationError("count matrix: one host id per row required");
        if (!host_labels_.empty() && static_cast<Eigen::Index>(host_labels_.size()) != x_.rows())
            throw ValidationError("count matrix: host labels must cover every row");
        totals_.resize(static_cast<std::size_t>(x_.rows()));
        for (Eigen::Index i = 0; i < x_.rows(); ++i) {
            std::int64_t sum = 0;
            for (Eigen::Index j = 0; j < x_.cols(); ++j) {
                if (x_(i, j) < 0) throw ValidationError("count matrix: negative count in row " + host_ids_[static_cast<std::size_t>(i)]);
                sum += x_(i, j);
            }
            if (sum < 1) throw ValidationError("count matrix: host " + host_ids_[static_cast<std::size_t>(i)] + " has no reads");
            totals_[static_cast<std::size_t>(i)] = sum;
        }
    }

    int n() const { return static_cast<int>(x_.rows()); }
    int p() const { return static_cast<int>(x_.cols()); }
    std::int64_t operator()(int i, int j) const { return x_(i, j); }
    std::int64_t total(int i) const { return totals_[static_cast<std::size_t>(i)]; }
    const IntMatrix& counts() const { return x_; }
    const std::vector<std::string>& taxon_names() const { return taxon_names_; }
    const std::vector<std::string>& host_ids() const { return host_ids_; }
    const std::vector<std::string>& host_labels() const { return host_labels_; }

    bool operator==(const CountMatrix& other) const {
        return x_ == other.x_ && taxon_names_ == other.taxon_names_ && host_ids_ == other.host_ids_;
    }

  private:
    IntMatrix x_;
    std::vector<std::string> taxon_names_;
    std::vector<std::string> host_ids_;
    std::vector<std::string> host_labels_;
    std::vector<std::int64_t> totals_;
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace detail

/// Tab-separated counts: header row = corner cell + taxon names, then one row
/// per host (id, integer counts).
inline CountMatrix read_counts_tsv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("counts: empty file");
    auto header = detail::split(line, '\t');
    if (header.size() < 2) throw ValidationError("counts: header needs at least one taxon column");
    std::vector<std::string> taxa(header.begin() + 1, header.end());
    std::vector<std::string> hosts;
    std::vector<std::vector<std::int64_t>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = detail::split(line, '\t');
        if (cells.size() != header.size())
            throw ValidationError("counts: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                  " fields, expected " + std::to_string(header.size()));
        hosts.push_back(cells[0]);
        std::vector<std::int64_t> row;
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const auto& cell = cells[c];
            std::size_t used = 0;
            long long v = 0;
            try {
                v = std::stoll(cell, &used);
            } catch (const std::logic_error&) {
                used = 0;
            }
            if (cell.empty() || used != cell.size())
                throw ValidationError("counts: non-integer value '" + cell + "' on line " + std::to_string(line_no));
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    IntMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(taxa.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < taxa.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return CountMatrix(std::move(x), std::move(taxa), std::move(hosts));
}

inline CountMatrix read_counts_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open counts file: " + path);
    return read_counts_tsv(in);
}

inline void write_counts_tsv(std::ostream& out, const CountMatrix& data) {
    out << "host";
    for (const auto& name : data.taxon_names()) out << '\t' << name;
    out << '\n';
    for (int i = 0; i < data.n(); ++i) {
        out << data.host_ids()[static_cast<std::size_t>(i)];
        for (int j = 0; j < data.p(); ++j) out << '\t' << data(i, j);
        out << '\n';
    }
}

/// Two-column TSV (host id, label) attaching case/control style labels.
inline CountMatrix with_host_labels(const CountMatrix& data, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open labels file: " + path);
    std::vector<std::string> labels(static_cast<std::size_t>(data.n()));
    std::string line;
    std::size_t found = 0;
    while (std::getline(in, line)) {
        auto cells = detail::split(line, '\t');
        if (cells.size() < 2) continue;
        for (int i = 0; i < data.n(); ++i)
            if (data.host_ids()[static_cast<std::size_t>(i)] == cells[0]) {
                labels[static_cast<std::size_t>(i)] = cells[1];
                ++found;
            }
    }
    if (found != labels.size()) throw ValidationError("labels file does not cover every host");
    return CountMatrix(data.counts(), data.taxon_names(), data.host_ids(), std::move(labels));
}

}  // namespace mmf
