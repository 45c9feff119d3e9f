// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace bmae {

namespace {

constexpr char kMagic[4] = {'B', 'M', 'C', 'K'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { le(v, 4); }
    void u64(std::uint64_t v) { le(v, 8); }
    void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
    void bytes(std::span<const std::uint8_t> b) {
        u64(b.size());
        out_.insert(out_.end(), b.begin(), b.end());
    }
    void str(const std::string& s) {
        bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    }
    void f64s(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v)
            f64(x);
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    void le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    double f64() { return std::bit_cast<double>(le(8)); }
    std::span<const std::uint8_t> bytes() {
        const std::uint64_t n = u64();
        need(n);
        auto s = b_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::string str() {
        const auto s = bytes();
        return {reinterpret_cast<const char*>(s.data()), s.size()};
    }
    std::vector<double> f64s() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (auto& x : v)
            x = f64();
        return v;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > b_.size() - pos_)
            throw CorruptionError("checkpoint truncated", pos_);
    }
    std::uint64_t le(int n) {
        need(n);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
        pos_ += n;
        return v;
    }
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> serialize_state(const TrainingState& state) {
    if (!state.model)
        throw InvalidArgument("training state has no model");
    Writer w;
    for (char c : kMagic)
        w.u8(static_cast<std::uint8_t>(c));
    w.u8(kCheckpointVersion);
    w.str(to_text(state.config));
    w.i32(state.tasks_done);
    w.i32(state.model->num_classes());

    const ParameterSet& params = state.model->parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (int i = 0; i < params.size(); ++i) {
        const Matrix& m = params.value(i);
        w.str(params.name(i));
        w.u32(static_cast<std::uint32_t>(m.rows()));
        w.u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index k = 0; k < m.size(); ++k)
            w.f64(m.data()[k]);
    }

    w.bytes(state.store.serialize());
    const auto classes = state.store.classes();
    w.u32(static_cast<std::uint32_t>(classes.size()));
    for (int c : classes)
        w.i32(c);
    w.u64(state.store.partitions());

    const MetricsLedger& l = state.ledger;
    w.u32(static_cast<std::uint32_t>(l.acc.size()));
    for (const auto& row : l.acc)
        w.f64s(row);
    w.u64(l.test_counts.size());
    for (auto n : l.test_counts)
        w.u64(n);
    w.f64s(l.wall_seconds);
    w.f64s(l.replay_mse);
    w.u64(l.steps.size());
    for (const auto& s : l.steps) {
        w.u64(s.step);
        w.i32(s.task);
        w.f64(s.loss.cls);
        w.f64(s.loss.rec);
        w.f64(s.loss.det);
        w.f64(s.loss.total);
    }
    w.u8(l.feature_density.has_value() ? 1 : 0);
    w.f64(l.feature_density.value_or(0.0));
    return w.take();
}

TrainingState deserialize_state(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (char c : kMagic)
        if (r.u8() != static_cast<std::uint8_t>(c))
            throw CorruptionError("bad checkpoint magic", 0);
    if (r.u8() != kCheckpointVersion)
        throw CorruptionError("unsupported checkpoint version", 4);

    TrainingState state;
    try {
        state.config = parse_config(r.str());
    } catch (const ConfigError& e) {
        throw CorruptionError(std::string("checkpoint config: ") + e.what(), r.pos());
    }
    state.tasks_done = r.i32();
    const int classes = r.i32();
    // The initial values are overwritten below; only the layout matters.
    state.model = std::make_unique<BilateralModel>(state.config.model, 0);
    if (classes < 0)
        throw CorruptionError("negative classifier size", r.pos());
    state.model->grow_head(classes);

    ParameterSet& params = state.model->parameters();
    const std::uint32_t count = r.u32();
    if (count != static_cast<std::uint32_t>(params.size()))
        throw CorruptionError("checkpoint parameter count does not match the model", r.pos());
    for (int i = 0; i < params.size(); ++i) {
        const std::size_t at = r.pos();
        const std::string name = r.str();
        const auto rows = r.u32();
        const auto cols = r.u32();
        Matrix& m = params.value(i);
        if (name != params.name(i) || rows != m.rows() || cols != m.cols())
            throw CorruptionError("checkpoint parameter '" + name + "' does not match the model", at);
        for (Eigen::Index k = 0; k < m.size(); ++k)
            m.data()[k] = r.f64();
    }

    state.store = ExemplarStore::deserialize(r.bytes());
    std::vector<int> admitted(r.u32());
    for (int& c : admitted)
        c = r.i32();
    state.store.restore_partitions(admitted, r.u64());

    MetricsLedger& l = state.ledger;
    l.acc.resize(r.u32());
    for (auto& row : l.acc)
        row = r.f64s();
    l.test_counts.resize(r.u64());
    for (auto& n : l.test_counts)
        n = r.u64();
    l.wall_seconds = r.f64s();
    l.replay_mse = r.f64s();
    const std::uint64_t steps = r.u64();
    if (steps > bytes.size())
        throw CorruptionError("implausible step count", r.pos());
    l.steps.resize(steps);
    for (auto& s : l.steps) {
        s.step = r.u64();
        s.task = r.i32();
        s.loss.cls = r.f64();
        s.loss.rec = r.f64();
        s.loss.det = r.f64();
        s.loss.total = r.f64();
    }
    const bool has_density = r.u8() != 0;
    const double density = r.f64();
    if (has_density)
        l.feature_density = density;
    if (!r.done())
        throw CorruptionError("trailing bytes in checkpoint", r.pos());
    return state;
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path) {
    const auto bytes = serialize_state(state);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out || !out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
            throw IoError("cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_state(bytes);
}

} // namespace bmae
