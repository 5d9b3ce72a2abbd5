#pragma once

#include <vector>

#include "mstr/hoi.hpp"
#include "mstr/matching/hungarian.hpp"

namespace mstr {

struct LossWeights {
  double l1 = 5.0;
  double giou = 2.0;
  double cls = 1.0;
  double act = 1.0;
  double no_object = 0.1;  // weight of the cls term on unmatched (padding) queries
};

// Matching cost of one ground-truth triplet against query q:
//   l1 * (|b_h - b^_h|_1 + |b_o - b^_o|_1) + giou * (2 - giou_h - giou_o)
//   + cls * (1 - p^(c)) + act * mean_a BCE(a, a^)
double match_cost(const HOITriplet& gt, const PredictionSet& pred, int q, const LossWeights& w = {});

// Rows are ground truth padded with empty rows up to the query count (cost 0),
// columns are queries. Throws ArgumentError when there are more triplets than queries.
CostMatrix build_cost_matrix(const std::vector<HOITriplet>& gts, const PredictionSet& pred,
                             const LossWeights& w = {});

struct LossTerms {
  Var loc;
  Var cls;
  Var act;
  Var total;
};

// Losses under a fixed assignment (col_for_row maps padded gt row -> query):
//   loc = sum over matched pairs of l1 * L1 + giou * (1 - gIoU), both boxes
//   cls = sum over queries of mean BCE over classes; unmatched queries target all
//         zeros with weight no_object
//   act = sum over matched pairs of mean BCE over actions
LossTerms compute_losses(const std::vector<HOITriplet>& gts, const PredictionSet& pred, const Assignment& sigma,
                         const LossWeights& w = {});

struct MatchedLoss {
  Assignment assignment;
  LossTerms terms;
};

// Hungarian matching followed by compute_losses.
MatchedLoss set_loss(const std::vector<HOITriplet>& gts, const PredictionSet& pred, const LossWeights& w = {});

}  // namespace mstr
