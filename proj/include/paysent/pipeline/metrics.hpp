#pragma once

#include <cstdint>

namespace paysent::pipeline {

// anomalous = positive class
struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
};

struct MetricsReport {
    double precision = 0, dr = 0, fpr = 0, accuracy = 0, f1 = 0;
    ConfusionCounts counts;
};

// Zero denominators resolve to 0 by convention.
inline MetricsReport compute_metrics(const ConfusionCounts& c) {
    MetricsReport r;
    r.counts = c;
    r.precision = (c.tp + c.fp) ? double(c.tp) / double(c.tp + c.fp) : 0.0;
    r.dr = (c.tp + c.fn) ? double(c.tp) / double(c.tp + c.fn) : 0.0;
    r.fpr = (c.fp + c.tn) ? double(c.fp) / double(c.fp + c.tn) : 0.0;
    r.accuracy = c.total() ? double(c.tp + c.tn) / double(c.total()) : 0.0;
    r.f1 = (r.precision + r.dr > 0.0) ? 2.0 * r.precision * r.dr / (r.precision + r.dr) : 0.0;
    return r;
}

}  // namespace paysent::pipeline
