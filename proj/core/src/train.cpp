#include "dalm/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include "dalm/errors.hpp"
#include "dalm/schedule.hpp"

namespace dalm {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
    out << "step,lr,loss,acc\n";
    for (const TraceRow& r : rows)
        out << r.step << ',' << fmt_double(r.lr) << ',' << fmt_double(r.loss) << ','
            << fmt_double(r.acc) << '\n';
}

void write_trace_csv_file(const std::string& path, const std::vector<TraceRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("trace: cannot open for write: " + path);
    write_trace_csv(out, rows);
    out.flush();
    if (!out) throw DataError("trace: write failed: " + path);
}

void TrainLoopConfig::validate() const {
    if (total_steps < 1) throw DataError("train: total_steps must be >= 1");
    if (micro_batch < 1) throw DataError("train: micro_batch must be >= 1");
    if (accumulation_target < 1) throw DataError("train: accumulation_target must be >= 1");
    if (accumulation_target % micro_batch != 0)
        throw DataError("train: accumulation_target must be a multiple of micro_batch");
    if (!(peak_lr > 0.0)) throw DataError("train: peak_lr must be > 0");
    if (!(peak_fraction > 0.0 && peak_fraction < 1.0))
        throw DataError("train: peak_fraction must be in (0,1)");
    if (threads < 1) throw DataError("train: threads must be >= 1");
}

TrainLoopResult run_train_loop(size_t item_count, const TrainLoopConfig& cfg,
                               nn::ParamRegistry<float>& reg, const SeqForwardFn& fn) {
    cfg.validate();
    if (item_count == 0) throw DataError("train: no training sequences");

    nn::AdamW<float> opt(reg, cfg.adamw);
    TrainLoopResult result;

    std::vector<size_t> order(item_count);
    size_t cursor = item_count;  // forces a shuffle before the first item
    uint64_t epoch = 0;
    uint64_t stream_index = 0;
    auto next_item = [&]() {
        if (cursor == item_count) {
            std::iota(order.begin(), order.end(), size_t{0});
            Rng r(cfg.seed, "order", epoch++);
            r.shuffle(order);
            cursor = 0;
        }
        return order[cursor++];
    };

    auto snapshot = [&]() {
        std::vector<std::vector<float>> vals;
        vals.reserve(reg.size());
        for (const auto& p : reg) vals.push_back(p->value.v);
        return vals;
    };
    auto restore = [&](const std::vector<std::vector<float>>& vals) {
        for (size_t i = 0; i < reg.size(); ++i) reg[i].value.v = vals[i];
    };
    std::vector<std::vector<float>> last_good = snapshot();

    for (long step = 1; step <= cfg.total_steps; ++step) {
        std::vector<size_t> items(static_cast<size_t>(cfg.accumulation_target));
        std::vector<uint64_t> streams(items.size());
        for (size_t i = 0; i < items.size(); ++i) {
            items[i] = next_item();
            streams[i] = stream_index++;
        }

        const int workers =
            static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.threads), items.size()));
        std::vector<nn::GradSink<float>> sinks(static_cast<size_t>(workers));
        std::vector<SeqOutcome> totals(static_cast<size_t>(workers));
        std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));

        auto run_block = [&](int w) {
            const size_t lo = items.size() * static_cast<size_t>(w) / static_cast<size_t>(workers);
            const size_t hi =
                items.size() * static_cast<size_t>(w + 1) / static_cast<size_t>(workers);
            try {
                for (size_t i = lo; i < hi; ++i) {
                    SeqOutcome o = fn(items[i], streams[i], sinks[static_cast<size_t>(w)]);
                    totals[static_cast<size_t>(w)].loss_sum += o.loss_sum;
                    totals[static_cast<size_t>(w)].scored += o.scored;
                    totals[static_cast<size_t>(w)].correct += o.correct;
                }
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        };

        if (workers == 1) {
            run_block(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<size_t>(workers));
            for (int w = 0; w < workers; ++w) pool.emplace_back(run_block, w);
            for (auto& t : pool) t.join();
        }

        try {
            for (const auto& e : errors)
                if (e) std::rethrow_exception(e);
        } catch (const NumericError& e) {
            restore(last_good);
            result.aborted = true;
            result.abort_reason = "step " + std::to_string(step) + ": " + e.what();
            break;
        }

        SeqOutcome total;
        for (const SeqOutcome& o : totals) {
            total.loss_sum += o.loss_sum;
            total.scored += o.scored;
            total.correct += o.correct;
        }
        if (total.scored == 0) throw DataError("train: step scored no positions");

        reg.zero_grads();
        for (auto& s : sinks) s.reduce_into(reg);
        const float inv = 1.0f / static_cast<float>(total.scored);
        for (auto& p : reg) {
            if (!p->trainable) continue;
            for (float& g : p->grad.v) g *= inv;
        }

        const double lr = triangular_lr(step, cfg.total_steps, cfg.peak_lr, cfg.peak_fraction);
        opt.step(lr);

        bool params_ok = std::isfinite(total.loss_sum);
        for (size_t i = 0; params_ok && i < reg.size(); ++i)
            params_ok = reg[i].value.all_finite();
        if (!params_ok) {
            restore(last_good);
            result.aborted = true;
            result.abort_reason = "step " + std::to_string(step) + ": non-finite update";
            break;
        }
        last_good = snapshot();

        TraceRow row;
        row.step = step;
        row.lr = lr;
        row.loss = total.loss_sum / static_cast<double>(total.scored);
        row.acc = static_cast<double>(total.correct) / static_cast<double>(total.scored);
        result.trace.push_back(row);
        result.steps_done = step;
    }

    if (!result.trace.empty()) {
        result.final_loss = result.trace.back().loss;
        result.final_acc = result.trace.back().acc;
    }
    return result;
}

}  // namespace dalm
