#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dalm/nn/adamw.hpp"
#include "dalm/nn/tape.hpp"

namespace dalm {

struct TraceRow {
    long step = 0;
    double lr = 0;
    double loss = 0;
    double acc = 0;
};

// Metric CSV format shared by both stages: "step,lr,loss,acc", full double
// precision so seeded reruns are byte-identical.
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);
void write_trace_csv_file(const std::string& path, const std::vector<TraceRow>& rows);

struct TrainLoopConfig {
    long total_steps = 0;
    int micro_batch = 8;
    int accumulation_target = 32;  // sequences consumed per optimizer step
    double peak_lr = 25e-5;
    double peak_fraction = 0.5;
    uint64_t seed = 0;
    int threads = 1;
    nn::AdamWConfig adamw;

    void validate() const;
};

struct SeqOutcome {
    double loss_sum = 0;  // summed NLL over this sequence's scored positions
    long scored = 0;
    long correct = 0;
};

// Runs forward+backward for one sequence, accumulating parameter gradients
// into the sink. `stream_index` counts consumed sequences across the whole
// run and seeds per-occurrence randomness (masking), so batching never
// changes which corruption a sequence receives.
using SeqForwardFn =
    std::function<SeqOutcome(size_t item, uint64_t stream_index, nn::GradSink<float>& sink)>;

struct TrainLoopResult {
    std::vector<TraceRow> trace;
    long steps_done = 0;
    double final_loss = 0;
    double final_acc = 0;
    bool aborted = false;         // numeric failure; parameters restored to last good step
    std::string abort_reason;
};

// Shared driver for both pretraining stages. Per optimizer step it draws
// `accumulation_target` sequences from a seed-shuffled epoch order, sums their
// gradients (statically partitioned over `threads` workers, reduced in worker
// order), divides by the step's scored-position count, and applies AdamW with
// the triangular schedule. Gradient accumulation is exact: the same sequences
// in the same order give bitwise-equal updates regardless of micro_batch.
TrainLoopResult run_train_loop(size_t item_count, const TrainLoopConfig& cfg,
                               nn::ParamRegistry<float>& reg, const SeqForwardFn& fn);

}  // namespace dalm
