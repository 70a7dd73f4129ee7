#pragma once

#include "dynaseg/types.hpp"

namespace dynaseg {

/// Balancing-weight schedule: FSF grows mu linearly with the live cluster
/// count (mu = q'/alpha), SCF uses its multiplicative inverse (mu = alpha/q'),
/// FIXED holds a constant.
struct MuSchedule {
    ScheduleKind kind = ScheduleKind::FSF;
    double alpha = 15.0;
    double fixed_mu = 5.0;

    static MuSchedule from_config(const RunConfig& cfg);
};

// Throws InvalidQPrime when q_prime < 1; InvalidSpec on a non-positive alpha.
double compute_mu(const MuSchedule& schedule, int q_prime);

/// Cross-entropy between the normalized response and its own argmax labels.
/// Labels are constants: no gradient term flows through their construction.
double feature_similarity_loss(const ResponseMap& resp, const LabelMap& labels,
                               LossReduction reduction = LossReduction::MEAN);
PlaneMatrix feature_similarity_grad(const ResponseMap& resp, const LabelMap& labels,
                                    LossReduction reduction = LossReduction::MEAN);

/// L1 penalty on horizontal and vertical neighbor differences over all
/// channels. MEAN divides by the number of difference terms,
/// q * (H*(W-1) + (H-1)*W).
double spatial_continuity_loss(const ResponseMap& resp,
                               LossReduction reduction = LossReduction::MEAN);
PlaneMatrix spatial_continuity_grad(const ResponseMap& resp,
                                    LossReduction reduction = LossReduction::MEAN);

// total = sim + mu * con with mu = compute_mu(schedule, q_prime).
LossBreakdown combined_loss(const ResponseMap& resp, const LabelMap& labels,
                            const MuSchedule& schedule, int q_prime,
                            LossReduction reduction = LossReduction::MEAN);
PlaneMatrix combined_grad(const ResponseMap& resp, const LabelMap& labels,
                          const MuSchedule& schedule, int q_prime,
                          LossReduction reduction = LossReduction::MEAN);

}  // namespace dynaseg
