#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rrl {

using LabelMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// K x K AU affinities: symmetric, unit diagonal, entries in [0, 1].
struct RelationMatrix {
  Eigen::MatrixXd m;
  std::vector<std::string> names;

  int K() const { return static_cast<int>(m.rows()); }
  void validate() const;
};

/// Transport cost 1 - M; zero diagonal.
struct CostMatrix {
  Eigen::MatrixXd c;

  int K() const { return static_cast<int>(c.rows()); }
};

struct MarginalWeights {
  Eigen::VectorXd a;        // supplier weights, clamped at zero
  Eigen::VectorXd b;        // demander weights, clamped at zero
  Eigen::VectorXd a_norm;   // a / sum(a), or uniform when sum(a) == 0
  Eigen::VectorXd b_norm;
  bool a_fallback = false;
  bool b_fallback = false;
};

// Dice co-occurrence 2 N_ij / (N_i + N_j) for i != j (0 when neither AU ever
// occurs), unit diagonal. Labels are N x K with entries in {0, 1}.
RelationMatrix relation_from_labels(const LabelMatrix& labels);

CostMatrix cost_from_relation(const RelationMatrix& relation);

// o, t: K x d local vectors (one per row); t_g, o_g: global vectors.
// a_i = max(<o_i, t_g>, 0), b_j = max(<t_j, o_g>, 0).
MarginalWeights marginal_weights(const Eigen::MatrixXd& o, const Eigen::VectorXd& t_g, const Eigen::MatrixXd& t,
                                 const Eigen::VectorXd& o_g);

// Header row holds AU names; K rows of K values follow.
RelationMatrix read_relation_csv(const std::filesystem::path& path);
void write_relation_csv(const std::filesystem::path& path, const RelationMatrix& relation);

std::vector<std::string> default_au_names(int K);

}  // namespace rrl
