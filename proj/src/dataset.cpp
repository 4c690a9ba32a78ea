#include "ivinfer/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace ivinfer {

Eigen::MatrixXd IVDataset::S() const {
    Eigen::MatrixXd s(n(), m());
    if (mx() > 0) s.leftCols(mx()) = X;
    if (mw() > 0) s.rightCols(mw()) = W;
    return s;
}

void IVDataset::validate() const {
    const Eigen::Index rows = n();
    auto check = [&](const Eigen::MatrixXd& block, const char* name) {
        if (block.cols() > 0 && block.rows() != rows)
            throw ConfigError(std::string("block '") + name + "' has " +
                              std::to_string(block.rows()) + " rows, expected " +
                              std::to_string(rows));
    };
    check(X, "X");
    check(W, "W");
    check(Z, "Z");
    check(C, "C");
    check(D, "D");
    if (k() < m())
        throw ConfigError("order condition violated: k = " + std::to_string(k()) +
                          " instruments < " + std::to_string(m()) + " endogenous covariates");
}

ProjectionPair::ProjectionPair(const Eigen::MatrixXd& basis_in) : basis(basis_in) {
    if (basis.cols() == 0) {
        rank = 0;
        Q.resize(basis.rows(), 0);
        return;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis);
    qr.setThreshold(kRankTol);
    rank = qr.rank();
    // The first `rank` Householder vectors span the column space of the pivoted basis.
    Q = qr.householderQ() * Eigen::MatrixXd::Identity(basis.rows(), rank);
}

Eigen::MatrixXd ProjectionPair::proj(const Eigen::MatrixXd& v) const {
    if (rank == 0 || v.cols() == 0) return Eigen::MatrixXd::Zero(v.rows(), v.cols());
    return Q * (Q.transpose() * v);
}

Eigen::MatrixXd ProjectionPair::annih(const Eigen::MatrixXd& v) const {
    return v - proj(v);
}

Eigen::MatrixXd proj(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& v) {
    return ProjectionPair(basis).proj(v);
}

Eigen::MatrixXd annih(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& v) {
    return ProjectionPair(basis).annih(v);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // Trim surrounding whitespace and a possible trailing CR.
        auto b = cell.find_first_not_of(" \t\r");
        auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

LoadReport load_csv(const std::string& path, const std::map<std::string, Role>& roles,
                    bool intercept) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);

    std::string header_line;
    if (!std::getline(in, header_line)) throw SchemaError("empty file: " + path);
    const std::vector<std::string> header = split_csv_line(header_line);

    // Map each role column to its position in the header.
    std::vector<std::pair<int, Role>> columns;  // (column index, role)
    for (const auto& [name, role] : roles) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw SchemaError("role column '" + name + "' not found in header of " + path);
        int idx = static_cast<int>(it - header.begin());
        for (const auto& [other, _] : columns)
            if (other == idx)
                throw ConfigError("column '" + name + "' assigned more than one role");
        columns.emplace_back(idx, role);
    }

    int n_outcome = 0, n_endo = 0, n_inst = 0;
    for (const auto& [_, role] : columns) {
        if (role == Role::outcome) ++n_outcome;
        if (role == Role::endogenous || role == Role::endogenous_nuisance) ++n_endo;
        if (role == Role::instrument) ++n_inst;
    }
    if (n_outcome != 1) throw ConfigError("exactly one outcome column is required");
    if (n_endo < 1) throw ConfigError("at least one endogenous column is required");
    if (n_inst < 1) throw ConfigError("at least one instrument column is required");

    std::vector<std::vector<double>> rows;
    int dropped = 0;
    std::string line;
    int row_index = 1;  // 1-based data row index for error messages
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::vector<std::string> cells = split_csv_line(line);
        std::vector<double> values(columns.size());
        bool missing = false;
        for (std::size_t j = 0; j < columns.size(); ++j) {
            const int idx = columns[j].first;
            if (idx >= static_cast<int>(cells.size()) || cells[idx].empty()) {
                missing = true;
                break;
            }
            const std::string& cell = cells[idx];
            char* end = nullptr;
            values[j] = std::strtod(cell.c_str(), &end);
            if (end != cell.c_str() + cell.size())
                throw ParseError("non-numeric cell '" + cell + "' in row " +
                                 std::to_string(row_index) + ", column '" + header[idx] + "'");
        }
        if (missing) {
            ++dropped;
        } else {
            rows.push_back(std::move(values));
        }
        ++row_index;
    }
    if (rows.empty()) throw SchemaError("no complete data rows in " + path);

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    auto count_role = [&](Role r) {
        return std::count_if(columns.begin(), columns.end(),
                             [&](const auto& c) { return c.second == r; });
    };

    LoadReport report;
    report.dropped_rows = dropped;
    IVDataset& d = report.data;
    d.intercept_flag = intercept;
    d.y.resize(n);
    d.X.resize(n, count_role(Role::endogenous));
    d.W.resize(n, count_role(Role::endogenous_nuisance));
    d.Z.resize(n, count_role(Role::instrument));
    d.C.resize(n, count_role(Role::exogenous_nuisance));
    d.D.resize(n, count_role(Role::exogenous));

    Eigen::Index cx = 0, cw = 0, cz = 0, cc = 0, cd = 0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const Role role = columns[j].second;
        Eigen::VectorXd col(n);
        for (Eigen::Index i = 0; i < n; ++i) col(i) = rows[i][j];
        switch (role) {
            case Role::outcome: d.y = col; break;
            case Role::endogenous: d.X.col(cx++) = col; break;
            case Role::endogenous_nuisance: d.W.col(cw++) = col; break;
            case Role::instrument: d.Z.col(cz++) = col; break;
            case Role::exogenous_nuisance: d.C.col(cc++) = col; break;
            case Role::exogenous: d.D.col(cd++) = col; break;
        }
    }
    d.validate();
    return report;
}

IVDataset residualize(const IVDataset& data) {
    const Eigen::Index n = data.n();
    Eigen::MatrixXd controls(n, data.mc() + (data.intercept_flag ? 1 : 0));
    Eigen::Index c = 0;
    if (data.intercept_flag) controls.col(c++).setOnes();
    if (data.mc() > 0) controls.rightCols(data.mc()) = data.C;

    if (controls.cols() == 0) return data;

    ProjectionPair pc(controls);
    IVDataset out;
    out.y = pc.annih(data.y);
    out.X = pc.annih(data.X);
    out.W = pc.annih(data.W);
    out.Z = pc.annih(data.Z);
    out.D = pc.annih(data.D);
    out.C.resize(n, 0);
    out.intercept_flag = false;  // the constant has been regressed out
    return out;
}

}  // namespace ivinfer
