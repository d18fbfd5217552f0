#include "rrl/relation/relation.hpp"

#include <cmath>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {

void RelationMatrix::validate() const {
  require(m.rows() == m.cols() && m.rows() > 0, "relation matrix must be square and non-empty");
  require(static_cast<Eigen::Index>(names.size()) == m.rows(), "relation matrix: one name per AU");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    require(m(i, i) == 1.0, "relation matrix: diagonal must be 1");
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      require(std::isfinite(m(i, j)) && m(i, j) >= 0.0 && m(i, j) <= 1.0, "relation matrix: entries must lie in [0, 1]");
      require(std::abs(m(i, j) - m(j, i)) <= 1e-12, "relation matrix: not symmetric");
    }
  }
}

std::vector<std::string> default_au_names(int K) {
  std::vector<std::string> names;
  for (int k = 0; k < K; ++k) names.push_back("au_" + std::to_string(k));
  return names;
}

RelationMatrix relation_from_labels(const LabelMatrix& labels) {
  require(labels.rows() >= 1 && labels.cols() >= 1, "relation_from_labels: need at least one labeled sample");
  require((labels.array() == 0 || labels.array() == 1).all(), "relation_from_labels: labels must be 0 or 1");
  const Eigen::MatrixXd L = labels.cast<double>();
  const Eigen::MatrixXd co = L.transpose() * L;  // co(i, j) = N_ij, co(i, i) = N_i
  const Eigen::Index K = labels.cols();
  RelationMatrix out{Eigen::MatrixXd::Identity(K, K), default_au_names(static_cast<int>(K))};
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = i + 1; j < K; ++j) {
      const double denom = co(i, i) + co(j, j);
      const double dice = denom > 0.0 ? 2.0 * co(i, j) / denom : 0.0;
      out.m(i, j) = out.m(j, i) = dice;
    }
  }
  return out;
}

CostMatrix cost_from_relation(const RelationMatrix& relation) {
  return {Eigen::MatrixXd::Ones(relation.m.rows(), relation.m.cols()) - relation.m};
}

MarginalWeights marginal_weights(const Eigen::MatrixXd& o, const Eigen::VectorXd& t_g, const Eigen::MatrixXd& t,
                                 const Eigen::VectorXd& o_g) {
  require(o.rows() == t.rows() && o.rows() > 0, "marginal_weights: online and target must have K rows");
  require(o.cols() == t_g.size() && t.cols() == o_g.size() && o.cols() == t.cols(),
          "marginal_weights: vector dimensions differ");
  MarginalWeights w;
  w.a = (o * t_g).cwiseMax(0.0);
  w.b = (t * o_g).cwiseMax(0.0);
  const auto K = static_cast<double>(o.rows());
  auto normalize = [K](const Eigen::VectorXd& v, bool& fallback) -> Eigen::VectorXd {
    const double total = v.sum();
    fallback = !(total > 0.0);
    if (fallback) return Eigen::VectorXd::Constant(v.size(), 1.0 / K);
    return v / total;
  };
  w.a_norm = normalize(w.a, w.a_fallback);
  w.b_norm = normalize(w.b, w.b_fallback);
  return w;
}

RelationMatrix read_relation_csv(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  const auto K = static_cast<Eigen::Index>(table.header.size());
  require(static_cast<Eigen::Index>(table.rows.size()) == K,
          path.string() + ": expected " + std::to_string(K) + " rows for " + std::to_string(K) + " AUs");
  RelationMatrix out{Eigen::MatrixXd(K, K), table.header};
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = 0; j < K; ++j) out.m(i, j) = io::parse_double(table.rows[i][j]);
  }
  out.validate();
  return out;
}

void write_relation_csv(const std::filesystem::path& path, const RelationMatrix& relation) {
  io::CsvTable table;
  table.header = relation.names;
  for (Eigen::Index i = 0; i < relation.m.rows(); ++i) {
    std::vector<std::string> row;
    for (Eigen::Index j = 0; j < relation.m.cols(); ++j) row.push_back(io::format_double(relation.m(i, j)));
    table.rows.push_back(std::move(row));
  }
  io::write_csv(path, table);
}

}  // namespace rrl
