#pragma once

// Trace persistence. Snapshots go to a versioned little-endian binary
// archive with a tab-separated text index; per-iteration scalars go to CSV.
//
// Archive layout (all integers little-endian, floats IEEE-754 binary64):
//   "MMFTRACE" u8 version
//   u32 chain_id, u64 seed, u32 iterations, u32 burn_in, u32 thin,
//   u32 n, u32 p, u32 snapshot_count
//   per snapshot:
//     u32 iteration, u32 K, f64 m, f64 rho,
//     Z (n*p u8, row-major), A (n*K u8, row-major), B (p*K u8, row-major),
//     W (p*K f64, row-major), c, s, t (p f64 each), p_col (K f64)

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmf/error.hpp"
#include "mmf/model.hpp"

namespace mmf {

struct Snapshot {
    int iteration = 0;
    ModelState state;
};

struct ScalarRecord {
    int iteration = 0;
    int K = 0;
    double log_joint = 0.0;
    double m = 0.0;
    double rho = 0.0;
    double mean_c = 0.0, mean_s = 0.0, mean_t = 0.0;
    // per-iteration acceptance rates; NaN when the kernel proposed nothing
    double acc_w = 0.0, acc_c = 0.0, acc_st = 0.0, acc_pk = 0.0, acc_birth = 0.0;
};

struct Trace {
    int chain_id = 0;
    std::uint64_t seed = 0;
    int iterations = 0;
    int burn_in = 0;
    int thin = 1;
    int n = 0;
    int p = 0;
    std::vector<ScalarRecord> scalars;
    std::vector<Snapshot> snapshots;
};

inline constexpr char kTraceMagic[8] = {'M', 'M', 'F', 'T', 'R', 'A', 'C', 'E'};
inline constexpr std::uint8_t kTraceVersion = 1;

namespace detail {

class LeWriter {
  public:
    explicit LeWriter(std::ostream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); ++offset_; }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::uint64_t offset() const { return offset_; }

  private:
    std::ostream& out_;
    std::uint64_t offset_ = 0;
};

class LeReader {
  public:
    explicit LeReader(std::istream& in) : in_(in) {}
    std::uint8_t u8() {
        const int ch = in_.get();
        if (ch == std::char_traits<char>::eof()) throw ValidationError("trace archive: unexpected end of file");
        return static_cast<std::uint8_t>(ch);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(u8()) << (8 * b);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(u8()) << (8 * b);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }

  private:
    std::istream& in_;
};

inline std::string fmt_num(double v) {
    if (std::isnan(v)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace detail

/// Writes the snapshot archive; returns the byte offset of every snapshot.
inline std::vector<std::uint64_t> write_trace_archive(std::ostream& out, const Trace& trace) {
    detail::LeWriter w(out);
    for (char ch : kTraceMagic) w.u8(static_cast<std::uint8_t>(ch));
    w.u8(kTraceVersion);
    w.u32(static_cast<std::uint32_t>(trace.chain_id));
    w.u64(trace.seed);
    w.u32(static_cast<std::uint32_t>(trace.iterations));
    w.u32(static_cast<std::uint32_t>(trace.burn_in));
    w.u32(static_cast<std::uint32_t>(trace.thin));
    w.u32(static_cast<std::uint32_t>(trace.n));
    w.u32(static_cast<std::uint32_t>(trace.p));
    w.u32(static_cast<std::uint32_t>(trace.snapshots.size()));
    std::vector<std::uint64_t> offsets;
    for (const auto& snap : trace.snapshots) {
        offsets.push_back(w.offset());
        const auto& st = snap.state;
        const int n = trace.n, p = trace.p, K = st.K();
        w.u32(static_cast<std::uint32_t>(snap.iteration));
        w.u32(static_cast<std::uint32_t>(K));
        w.f64(st.m);
        w.f64(st.rho);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) w.u8(st.Z(i, j));
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k) w.u8(st.A(i, k));
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < K; ++k) w.u8(st.B(j, k));
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < K; ++k) w.f64(st.W(j, k));
        for (int j = 0; j < p; ++j) w.f64(st.c(j));
        for (int j = 0; j < p; ++j) w.f64(st.s(j));
        for (int j = 0; j < p; ++j) w.f64(st.t(j));
        for (double pk : st.p_col) w.f64(pk);
    }
    return offsets;
}

/// Reads an archive written by write_trace_archive (scalars are not part of
/// the archive and stay empty).
inline Trace read_trace_archive(std::istream& in) {
    detail::LeReader r(in);
    for (char ch : kTraceMagic)
        if (r.u8() != static_cast<std::uint8_t>(ch)) throw ValidationError("trace archive: bad magic header");
    if (const auto version = r.u8(); version != kTraceVersion)
        throw ValidationError("trace archive: unsupported version " + std::to_string(version));
    Trace trace;
    trace.chain_id = static_cast<int>(r.u32());
    trace.seed = r.u64();
    trace.iterations = static_cast<int>(r.u32());
    trace.burn_in = static_cast<int>(r.u32());
    trace.thin = static_cast<int>(r.u32());
    trace.n = static_cast<int>(r.u32());
    trace.p = static_cast<int>(r.u32());
    const auto count = r.u32();
    const int n = trace.n, p = trace.p;
    trace.snapshots.reserve(count);
    for (std::uint32_t sidx = 0; sidx < count; ++sidx) {
        Snapshot snap;
        snap.iteration = static_cast<int>(r.u32());
        const int K = static_cast<int>(r.u32());
        auto& st = snap.state;
        st.m = r.f64();
        st.rho = r.f64();
        st.Z.resize(n, p);
        st.A.resize(n, K);
        st.B.resize(p, K);
        st.W.resize(p, K);
        st.c.resize(p);
        st.s.resize(p);
        st.t.resize(p);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p; ++j) st.Z(i, j) = r.u8();
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < K; ++k) st.A(i, k) = r.u8();
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < K; ++k) st.B(j, k) = r.u8();
        for (int j = 0; j < p; ++j)
            for (int k = 0; k < K; ++k) st.W(j, k) = r.f64();
        for (int j = 0; j < p; ++j) st.c(j) = r.f64();
        for (int j = 0; j < p; ++j) st.s(j) = r.f64();
        for (int j = 0; j < p; ++j) st.t(j) = r.f64();
        st.p_col.resize(static_cast<std::size_t>(K));
        for (auto& pk : st.p_col) pk = r.f64();
        trace.snapshots.push_back(std::move(snap));
    }
    return trace;
}

inline void write_trace_index(std::ostream& out, const Trace& trace, const std::vector<std::uint64_t>& offsets) {
    out << "snapshot\titeration\tK\toffset\n";
    for (std::size_t s = 0; s < trace.snapshots.size(); ++s)
        out << s << '\t' << trace.snapshots[s].iteration << '\t' << trace.snapshots[s].state.K() << '\t' << offsets[s]
            << '\n';
}

inline void write_scalars_csv(std::ostream& out, const Trace& trace) {
    out << "iteration,K,log_joint,m,rho,mean_c,mean_s,mean_t,acc_w,acc_c,acc_st,acc_pk,acc_birth\n";
    for (const auto& r : trace.scalars) {
        out << r.iteration << ',' << r.K;
        for (double v : {r.log_joint, r.m, r.rho, r.mean_c, r.mean_s, r.mean_t, r.acc_w, r.acc_c, r.acc_st, r.acc_pk,
                         r.acc_birth})
            out << ',' << detail::fmt_num(v);
        out << '\n';
    }
}

/// Writes <dir>/trace_chain<c>.bin, .idx and scalars_chain<c>.csv.
inline void save_trace(const std::string& dir, const Trace& trace) {
    const std::string stem = dir + "/trace_chain" + std::to_string(trace.chain_id);
    std::ofstream bin(stem + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + stem + ".bin");
    const auto offsets = write_trace_archive(bin, trace);
    std::ofstream idx(stem + ".idx");
    write_trace_index(idx, trace, offsets);
    std::ofstream csv(dir + "/scalars_chain" + std::to_string(trace.chain_id) + ".csv");
    write_scalars_csv(csv, trace);
    if (!bin || !idx || !csv) throw std::runtime_error("failed writing trace files in " + dir);
}

inline Trace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open trace archive: " + path);
    return read_trace_archive(in);
}

}  // namespace mmf
