#include "sslvqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace sslvqa {

namespace {

constexpr char kMagic[4] = {'S', 'V', 'Q', 'K'};

std::uint64_t fnv1a(const char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <class T> void pod(T v) {
        static_assert(std::endian::native == std::endian::little, "little-endian host required");
        bytes(&v, sizeof v);
    }
    void u32(std::uint32_t v) { pod(v); }
    void i64(std::int64_t v) { pod(v); }
    void f64(double v) { pod(v); }
    void str(const std::string& s) {
        pod(static_cast<std::uint64_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void matrix(const Matrix& m) {
        u32(static_cast<std::uint32_t>(m.rows()));
        u32(static_cast<std::uint32_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            for (Eigen::Index r = 0; r < m.rows(); ++r) f64(m(r, c));
    }
    void matrices(const std::vector<const Matrix*>& ms) {
        u32(static_cast<std::uint32_t>(ms.size()));
        for (const Matrix* m : ms) matrix(*m);
    }
    void adam(const AdamWState& s) {
        i64(s.step);
        u32(static_cast<std::uint32_t>(s.m.size()));
        for (std::size_t i = 0; i < s.m.size(); ++i) {
            matrix(s.m[i]);
            matrix(s.v[i]);
        }
    }
    std::string& data() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const char* p, std::size_t n) : p_(p), n_(n) {}
    void bytes(void* dst, std::size_t n) {
        if (pos_ + n > n_) throw FormatError("checkpoint truncated");
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }
    template <class T> T pod() {
        T v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::int64_t i64() { return pod<std::int64_t>(); }
    double f64() { return pod<double>(); }
    std::string str() {
        const auto n = pod<std::uint64_t>();
        if (n > n_ - pos_) throw FormatError("checkpoint truncated");
        std::string s(p_ + pos_, n);
        pos_ += n;
        return s;
    }
    Matrix matrix() {
        const std::uint32_t r = u32(), c = u32();
        if (static_cast<std::uint64_t>(r) * c * 8 > n_ - pos_) throw FormatError("checkpoint truncated");
        Matrix m(r, c);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = f64();
        return m;
    }
    void matrices_into(const std::vector<Matrix*>& dst, const char* what) {
        if (u32() != dst.size()) throw FormatError(std::string("checkpoint: tensor count mismatch in ") + what);
        for (Matrix* m : dst) {
            Matrix v = matrix();
            if (v.rows() != m->rows() || v.cols() != m->cols())
                throw FormatError(std::string("checkpoint: tensor shape mismatch in ") + what);
            *m = std::move(v);
        }
    }
    AdamWState adam() {
        AdamWState s;
        s.step = i64();
        const std::uint32_t n = u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            s.m.push_back(matrix());
            s.v.push_back(matrix());
        }
        return s;
    }
    bool done() const { return pos_ == n_; }

private:
    const char* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

void write_step(Writer& w, const StepRecord& r) {
    w.i64(r.epoch);
    w.i64(r.step);
    for (double v : {r.total, r.supervised, r.consistency, r.transfer, r.eps_r, r.eps_d}) w.f64(v);
    w.i64(r.mask);
    w.u32(r.skipped ? 1 : 0);
}

StepRecord read_step(Reader& r) {
    StepRecord s;
    s.epoch = static_cast<int>(r.i64());
    s.step = r.i64();
    s.total = r.f64();
    s.supervised = r.f64();
    s.consistency = r.f64();
    s.transfer = r.f64();
    s.eps_r = r.f64();
    s.eps_d = r.f64();
    s.mask = static_cast<int>(r.i64());
    s.skipped = r.u32() != 0;
    return s;
}

} // namespace

std::string serialize_state(const TrainState& s) {
    Writer w;
    w.bytes(kMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(s.stage));
    w.str(to_text(s.config));
    w.i64(s.epoch);
    w.i64(s.global_step);
    w.i64(s.consecutive_rejected);
    w.str(s.rng_state);
    const bool ssl = s.stage == TrainStage::Ssl;
    w.matrices(s.regressor_encoder.tensors());
    if (ssl) {
        w.matrices(s.distance_encoder.tensors());
        w.matrices(s.head.tensors());
        w.matrix(s.pristine.stats.mean);
        w.matrix(s.pristine.stats.cov);
        w.i64(static_cast<std::int64_t>(s.pristine.n_source_clips));
        w.adam(s.opt_distance);
    }
    w.adam(s.opt_regressor);
    w.u32(static_cast<std::uint32_t>(s.epoch_loss.size()));
    for (double v : s.epoch_loss) w.f64(v);
    w.u32(static_cast<std::uint32_t>(s.log.size()));
    for (const StepRecord& r : s.log) write_step(w, r);
    const std::uint64_t h = fnv1a(w.data().data(), w.data().size());
    w.pod(h);
    return std::move(w.data());
}

TrainState deserialize_state(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not an sslvqa checkpoint (bad magic)");
    }
    const std::size_t body = bytes.size() - 8;
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, 8);
    Reader r(bytes.data() + 4, body - 4);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    if (fnv1a(bytes.data(), body) != stored) {
        throw FormatError("checkpoint checksum mismatch (corrupted file)");
    }
    TrainState s;
    const std::uint32_t stage = r.u32();
    if (stage > 1) throw FormatError("checkpoint: unknown stage");
    s.stage = static_cast<TrainStage>(stage);
    try {
        s.config = train_config_from_text(r.str());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: bad config block: ") + e.what());
    }
    s.epoch = static_cast<int>(r.i64());
    s.global_step = r.i64();
    s.consecutive_rejected = static_cast<int>(r.i64());
    s.rng_state = r.str();
    // Shapes come from the stored config.
    s.regressor_encoder = init_encoder(s.config.encoder, 0);
    r.matrices_into(s.regressor_encoder.tensors(), "encoder");
    if (s.stage == TrainStage::Ssl) {
        s.distance_encoder = init_encoder(s.config.encoder, 0);
        r.matrices_into(s.distance_encoder.tensors(), "distance encoder");
        s.head = init_head(s.config.encoder.channels, s.config.head_hidden, 0);
        r.matrices_into(s.head.tensors(), "head");
        s.pristine.stats.mean = r.matrix();
        s.pristine.stats.cov = r.matrix();
        s.pristine.n_source_clips = static_cast<std::size_t>(r.i64());
        s.opt_distance = r.adam();
    }
    s.opt_regressor = r.adam();
    const std::uint32_t ne = r.u32();
    for (std::uint32_t i = 0; i < ne; ++i) s.epoch_loss.push_back(r.f64());
    const std::uint32_t nl = r.u32();
    for (std::uint32_t i = 0; i < nl; ++i) s.log.push_back(read_step(r));
    if (!r.done()) throw FormatError("checkpoint has trailing bytes");
    return s;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
    const std::string bytes = serialize_state(state);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot write checkpoint: " + path.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("cannot write checkpoint: " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open checkpoint: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return deserialize_state(ss.str());
}

} // namespace sslvqa
