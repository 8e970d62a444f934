#include "mkid/model.hpp"

#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mkid {

using nlohmann::json;

// ------------------------------------------------------------- ModelSpec

ModelSpec ModelSpec::parse(const std::string& notation, FirDomain default_domain) {
    ModelSpec spec;
    std::size_t i = 0;
    const std::size_t n = notation.size();
    while (i < n) {
        if (notation[i] == '-' || notation[i] == '_' || notation[i] == ' ') {
            ++i;
            continue;
        }
        StageSpec st;
        if (notation.compare(i, 3, "FIR") == 0) {
            st.kind = StageSpec::Kind::Fir;
            st.fir_domain = default_domain;
            i += 3;
        } else if (notation.compare(i, 2, "NL") == 0) {
            st.kind = StageSpec::Kind::Nl;
            i += 2;
        } else {
            throw std::invalid_argument("model notation: expected FIR or NL at position " +
                                        std::to_string(i) + " in \"" + notation + "\"");
        }
        std::size_t digits = 0;
        while (i + digits < n && std::isdigit(static_cast<unsigned char>(notation[i + digits])))
            ++digits;
        if (digits > 0) {
            st.out_channels = std::stoul(notation.substr(i, digits));
            if (st.out_channels == 0)
                throw std::invalid_argument("model notation: zero channel width at position " +
                                            std::to_string(i));
            i += digits;
        }
        spec.stages.push_back(st);
    }
    if (spec.stages.empty())
        throw std::invalid_argument("model notation: empty specification");
    if (spec.stages.back().out_channels != 1)
        throw std::invalid_argument("model notation: last stage must have one output channel (SISO)");
    return spec;
}

void ModelSpec::assign_kernel_lens(const std::vector<std::size_t>& lens) {
    std::size_t j = 0;
    for (auto& st : stages)
        if (st.kind == StageSpec::Kind::Fir) {
            if (j >= lens.size())
                throw std::invalid_argument("assign_kernel_lens: need " +
                                            std::to_string(fir_count()) + " lengths");
            st.kernel_len = lens[j++];
        }
    if (j != lens.size())
        throw std::invalid_argument("assign_kernel_lens: too many lengths");
}

std::size_t ModelSpec::fir_count() const {
    std::size_t n = 0;
    for (const auto& st : stages)
        if (st.kind == StageSpec::Kind::Fir) ++n;
    return n;
}

std::size_t ModelSpec::kernel_len_sum() const {
    std::size_t s = 0;
    for (const auto& st : stages)
        if (st.kind == StageSpec::Kind::Fir) s += st.kernel_len;
    return s;
}

std::string ModelSpec::notation() const {
    std::string out;
    for (const auto& st : stages) {
        if (!out.empty()) out += "-";
        out += (st.kind == StageSpec::Kind::Fir) ? "FIR" : "NL";
        if (st.out_channels != 1) out += std::to_string(st.out_channels);
    }
    return out;
}

void ModelSpec::validate() const {
    if (stages.empty()) throw std::invalid_argument("ModelSpec: no stages");
    if (stages.back().out_channels != 1)
        throw std::invalid_argument("ModelSpec: model output must be single channel");
    for (const auto& st : stages)
        if (st.kind == StageSpec::Kind::Fir && st.kernel_len == 0)
            throw std::invalid_argument("ModelSpec: FIR stage without kernel length");
    if (plants == 0) throw std::invalid_argument("ModelSpec: plants must be >= 1");
}

std::string ModelSpec::to_json() const {
    json j;
    j["notation"] = notation();
    json stg = json::array();
    for (const auto& st : stages) {
        json s;
        s["kind"] = st.kind == StageSpec::Kind::Fir ? "FIR" : "NL";
        s["out_channels"] = st.out_channels;
        if (st.kind == StageSpec::Kind::Fir) {
            s["kernel_len"] = st.kernel_len;
            s["fir_domain"] = st.fir_domain == FirDomain::Time ? "time" : "freq";
        }
        stg.push_back(s);
    }
    j["stages"] = stg;
    j["kernel_mode"] = kernel_mode == KernelMode::Multikernel ? "multikernel" : "single_kernel";
    j["plants"] = plants;
    j["complex"] = complex_valued;
    j["nl"] = {{"depth", nl.depth}, {"width", nl.width}, {"with_bias", nl.with_bias}};
    return j.dump();
}

ModelSpec ModelSpec::from_json(const std::string& text) {
    const json j = json::parse(text);
    ModelSpec spec;
    for (const auto& s : j.at("stages")) {
        StageSpec st;
        st.kind = s.at("kind") == "FIR" ? StageSpec::Kind::Fir : StageSpec::Kind::Nl;
        st.out_channels = s.at("out_channels").get<std::size_t>();
        if (st.kind == StageSpec::Kind::Fir) {
            st.kernel_len = s.at("kernel_len").get<std::size_t>();
            st.fir_domain = s.at("fir_domain") == "freq" ? FirDomain::Freq : FirDomain::Time;
        }
        spec.stages.push_back(st);
    }
    spec.kernel_mode = j.at("kernel_mode") == "single_kernel" ? KernelMode::SingleKernel
                                                              : KernelMode::Multikernel;
    spec.plants = j.at("plants").get<std::size_t>();
    spec.complex_valued = j.at("complex").get<bool>();
    spec.nl.depth = j.at("nl").at("depth").get<std::size_t>();
    spec.nl.width = j.at("nl").at("width").get<std::size_t>();
    spec.nl.with_bias = j.at("nl").at("with_bias").get<bool>();
    return spec;
}

// ------------------------------------------------------------- FrameSpec

FrameSpec FrameSpec::derive(const ModelSpec& spec) {
    return derive(spec, 2 * spec.kernel_len_sum());
}

FrameSpec FrameSpec::derive(const ModelSpec& spec, std::size_t frame_len) {
    spec.validate();
    FrameSpec fs;
    const std::size_t lsum = spec.kernel_len_sum();
    const std::size_t nfir = spec.fir_count();
    if (nfir == 0) throw std::invalid_argument("FrameSpec: model has no FIR stage");
    fs.frame_len = frame_len;
    fs.total_memory = lsum - nfir + 1;
    if (frame_len < lsum)
        throw std::invalid_argument("FrameSpec: frame length below total kernel length");
    if (nfir <= 1)
        fs.frame_shift = frame_len - lsum + 1;
    else
        fs.frame_shift = (frame_len - lsum + 1) / 2;
    if (fs.frame_shift == 0) throw std::invalid_argument("FrameSpec: frame shift is zero");
    return fs;
}

// ------------------------------------------------------------ segmenting

namespace {

std::size_t frame_count(std::size_t N, std::size_t M, std::size_t R) {
    if (N < M)
        throw std::invalid_argument("segment_frames: sequence length " + std::to_string(N) +
                                    " shorter than frame length " + std::to_string(M));
    return (N - M) / R + 1;
}

}  // namespace

Tensor4 segment_frames(const std::vector<std::vector<double>>& x, std::size_t M, std::size_t R) {
    const std::size_t K = x.size();
    if (K == 0) throw std::invalid_argument("segment_frames: no plants");
    const std::size_t T = frame_count(x[0].size(), M, R);
    Tensor4 out({T, K, 1, M});
    for (std::size_t k = 0; k < K; ++k) {
        if (x[k].size() != x[0].size())
            throw std::invalid_argument("segment_frames: unequal sequence lengths");
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < M; ++m) out.at(t, k, 0, m) = x[k][t * R + m];
    }
    return out;
}

Tensor4 segment_targets(const std::vector<std::vector<double>>& y, std::size_t M, std::size_t R) {
    const std::size_t K = y.size();
    const std::size_t T = frame_count(y[0].size(), M, R);
    Tensor4 out({T, K, 1, R});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < R; ++m) out.at(t, k, 0, m) = y[k][t * R + M - R + m];
    return out;
}

CTensor segment_frames_complex(const std::vector<std::vector<double>>& re,
                               const std::vector<std::vector<double>>& im,
                               std::size_t M, std::size_t R) {
    const std::size_t K = re.size();
    if (K == 0 || im.size() != K) throw std::invalid_argument("segment_frames_complex: bad planes");
    const std::size_t T = frame_count(re[0].size(), M, R);
    CTensor out({T, K, 1, M});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < M; ++m) {
                out.re(t, k, 0, m) = re[k][t * R + m];
                out.im(t, k, 0, m) = im[k][t * R + m];
            }
    return out;
}

CTensor segment_targets_complex(const std::vector<std::vector<double>>& re,
                                const std::vector<std::vector<double>>& im,
                                std::size_t M, std::size_t R) {
    const std::size_t K = re.size();
    const std::size_t T = frame_count(re[0].size(), M, R);
    CTensor out({T, K, 1, R});
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t m = 0; m < R; ++m) {
                out.re(t, k, 0, m) = re[k][t * R + M - R + m];
                out.im(t, k, 0, m) = im[k][t * R + M - R + m];
            }
    return out;
}

// ----------------------------------------------------------------- Model

namespace {

std::unique_ptr<Block> build_stage(const StageSpec& st, const ModelSpec& spec,
                                   std::size_t in_ch, std::size_t running_len, Rng rng) {
    std::unique_ptr<Block> b;
    if (st.kind == StageSpec::Kind::Nl) {
        b = std::make_unique<NlBlock>(in_ch,
                                      std::vector<std::size_t>(spec.nl.depth, spec.nl.width),
                                      st.out_channels, spec.nl.with_bias);
    } else if (st.fir_domain == FirDomain::Time) {
        b = std::make_unique<FirTimeBlock>(st.kernel_len, spec.plants, in_ch, st.out_channels,
                                           spec.kernel_mode);
    } else {
        b = std::make_unique<FirFreqBlock>(st.kernel_len, running_len, spec.plants, in_ch,
                                           st.out_channels, spec.kernel_mode);
    }
    b->init(rng);
    return b;
}

}  // namespace

Model::Model(const ModelSpec& spec, const FrameSpec& frame, Rng rng)
    : spec_(spec), frame_(frame) {
    spec_.validate();
    if (spec_.complex_valued)
        throw std::invalid_argument("Model: spec is complex-valued, use CModel");
    std::size_t in_ch = 1;
    std::size_t running_len = frame.frame_len;
    for (std::size_t si = 0; si < spec_.stages.size(); ++si) {
        const StageSpec& st = spec_.stages[si];
        stages_.push_back(build_stage(st, spec_, in_ch, running_len, rng.split(si)));
        if (st.kind == StageSpec::Kind::Fir) {
            if (running_len < st.kernel_len)
                throw std::invalid_argument("Model: stage " + std::to_string(si) +
                                            " kernel longer than remaining frame");
            running_len = running_len - st.kernel_len + 1;
        }
        in_ch = st.out_channels;
    }
    if (running_len < frame.frame_shift)
        throw std::invalid_argument("Model: fewer valid samples than frame shift");
}

Model::Model(const Model& other) : spec_(other.spec_), frame_(other.frame_) {
    for (const auto& s : other.stages_) stages_.push_back(s->clone());
}

Model& Model::operator=(const Model& other) {
    if (this == &other) return *this;
    spec_ = other.spec_;
    frame_ = other.frame_;
    stages_.clear();
    for (const auto& s : other.stages_) stages_.push_back(s->clone());
    return *this;
}

std::size_t Model::param_count() const {
    std::size_t n = 0;
    for (const auto& s : stages_) n += s->params().size();
    return n;
}

Tensor4 Model::forward(const Tensor4& x_frames) const {
    Tensor4 cur = x_frames;
    for (std::size_t si = 0; si < stages_.size(); ++si) {
        try {
            cur = stages_[si]->forward(cur);
        } catch (const ShapeError& e) {
            throw ShapeError("stage " + std::to_string(si) + " (" + stages_[si]->name() +
                             "): " + e.what());
        }
    }
    return cur;
}

Tensor4 Model::predict(const Tensor4& x_frames) const {
    Tensor4 full = forward(x_frames);
    const Shape4 s = full.shape();
    const std::size_t R = frame_.frame_shift;
    Tensor4 out({s.t, s.k, s.c, R});
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k)
            for (std::size_t c = 0; c < s.c; ++c)
                for (std::size_t m = 0; m < R; ++m)
                    out.at(t, k, c, m) = full.at(t, k, c, s.m - R + m);
    return out;
}

std::vector<std::vector<double>> Model::backward(const Tensor4& x_frames,
                                                 const Tensor4& grad_pred) const {
    std::vector<Tensor4> inputs;
    inputs.reserve(stages_.size());
    Tensor4 cur = x_frames;
    for (const auto& s : stages_) {
        inputs.push_back(cur);
        cur = s->forward(cur);
    }
    const Shape4 fs = cur.shape();
    const std::size_t R = frame_.frame_shift;
    require_shape(grad_pred.shape(), {fs.t, fs.k, fs.c, R}, "Model backward");

    Tensor4 up(fs);
    for (std::size_t t = 0; t < fs.t; ++t)
        for (std::size_t k = 0; k < fs.k; ++k)
            for (std::size_t c = 0; c < fs.c; ++c)
                for (std::size_t m = 0; m < R; ++m)
                    up.at(t, k, c, fs.m - R + m) = grad_pred.at(t, k, c, m);

    std::vector<std::vector<double>> grads(stages_.size());
    for (std::size_t si = stages_.size(); si-- > 0;) {
        grads[si].assign(stages_[si]->params().size(), 0.0);
        up = stages_[si]->backward(inputs[si], up, grads[si]);
    }
    return grads;
}

Tensor4 Model::forward_backward(const Tensor4& x_frames, const Tensor4& target,
                                double& loss, std::vector<std::vector<double>>& grads) const {
    std::vector<Tensor4> inputs;
    inputs.reserve(stages_.size());
    Tensor4 cur = x_frames;
    for (const auto& s : stages_) {
        inputs.push_back(cur);
        cur = s->forward(cur);
    }
    const Shape4 fs = cur.shape();
    const std::size_t R = frame_.frame_shift;
    require_shape(target.shape(), {fs.t, fs.k, fs.c, R}, "forward_backward target");

    Tensor4 pred({fs.t, fs.k, fs.c, R});
    Tensor4 up(fs);
    loss = 0.0;
    for (std::size_t t = 0; t < fs.t; ++t)
        for (std::size_t k = 0; k < fs.k; ++k)
            for (std::size_t c = 0; c < fs.c; ++c)
                for (std::size_t m = 0; m < R; ++m) {
                    const double p = cur.at(t, k, c, fs.m - R + m);
                    const double e = p - target.at(t, k, c, m);
                    pred.at(t, k, c, m) = p;
                    loss += e * e;
                    up.at(t, k, c, fs.m - R + m) = 2.0 * e;
                }

    grads.resize(stages_.size());
    for (std::size_t si = stages_.size(); si-- > 0;) {
        grads[si].assign(stages_[si]->params().size(), 0.0);
        up = stages_[si]->backward(inputs[si], up, grads[si]);
    }
    return pred;
}

std::vector<std::vector<double>> Model::snapshot_params() const {
    std::vector<std::vector<double>> snap;
    for (const auto& s : stages_) snap.push_back(s->params());
    return snap;
}

void Model::restore_params(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != stages_.size())
        throw std::invalid_argument("restore_params: stage count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != stages_[i]->params().size())
            throw std::invalid_argument("restore_params: stage " + std::to_string(i) +
                                        " length mismatch");
        stages_[i]->params() = snap[i];
    }
}

// ----------------------------------------------------------- persistence

namespace {

constexpr char kMagic[4] = {'B', 'I', 'D', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void save_impl(const std::string& path, const ModelSpec& spec, const FrameSpec& frame,
               const std::vector<std::vector<double>>& stage_params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
    json j = json::parse(spec.to_json());
    j["frame"] = {{"frame_len", frame.frame_len},
                  {"frame_shift", frame.frame_shift},
                  {"total_memory", frame.total_memory}};
    const std::string blob = j.dump();
    write_u64(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    write_u64(os, stage_params.size());
    for (const auto& p : stage_params) {
        write_u64(os, p.size());
        os.write(reinterpret_cast<const char*>(p.data()),
                 static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failure on " + path);
}

void load_impl(const std::string& path, ModelSpec& spec, FrameSpec& frame,
               std::vector<std::vector<double>>& stage_params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a model checkpoint (bad magic)");
    std::uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), sizeof ver);
    if (ver != kVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(ver));
    const std::uint64_t blob_len = read_u64(is);
    std::string blob(blob_len, '\0');
    is.read(blob.data(), static_cast<std::streamsize>(blob_len));
    const json j = json::parse(blob);
    spec = ModelSpec::from_json(blob);
    frame.frame_len = j.at("frame").at("frame_len").get<std::size_t>();
    frame.frame_shift = j.at("frame").at("frame_shift").get<std::size_t>();
    frame.total_memory = j.at("frame").at("total_memory").get<std::size_t>();
    const std::uint64_t nstages = read_u64(is);
    stage_params.resize(nstages);
    for (auto& p : stage_params) {
        p.resize(read_u64(is));
        is.read(reinterpret_cast<char*>(p.data()),
                static_cast<std::streamsize>(p.size() * sizeof(double)));
    }
    if (!is) throw std::runtime_error(path + ": truncated checkpoint");
}

}  // namespace

void Model::save(const std::string& path) const { save_impl(path, spec_, frame_, snapshot_params()); }

Model Model::load(const std::string& path) {
    ModelSpec spec;
    FrameSpec frame;
    std::vector<std::vector<double>> params;
    load_impl(path, spec, frame, params);
    Model m(spec, frame, Rng(0));
    m.restore_params(params);
    return m;
}

// ---------------------------------------------------------------- CModel

namespace {

std::unique_ptr<CBlock> build_cstage(const StageSpec& st, const ModelSpec& spec,
                                     std::size_t in_ch, Rng rng) {
    std::unique_ptr<CBlock> b;
    if (st.kind == StageSpec::Kind::Nl) {
        if (in_ch != 1 || st.out_channels != 1)
            throw std::invalid_argument("CModel: polar NL stage must be single-channel");
        b = std::make_unique<ComplexNlBlock>(
            std::vector<std::size_t>(spec.nl.depth, spec.nl.width), spec.nl.with_bias);
    } else {
        if (st.fir_domain != FirDomain::Time)
            throw std::invalid_argument("CModel: frequency-domain complex FIR not supported");
        b = std::make_unique<ComplexFirBlock>(st.kernel_len, spec.plants, in_ch,
                                              st.out_channels, spec.kernel_mode);
    }
    b->init(rng);
    return b;
}

}  // namespace

CModel::CModel(const ModelSpec& spec, const FrameSpec& frame, Rng rng)
    : spec_(spec), frame_(frame) {
    spec_.validate();
    if (!spec_.complex_valued)
        throw std::invalid_argument("CModel: spec is real-valued, use Model");
    std::size_t in_ch = 1;
    std::size_t running_len = frame.frame_len;
    for (std::size_t si = 0; si < spec_.stages.size(); ++si) {
        const StageSpec& st = spec_.stages[si];
        stages_.push_back(build_cstage(st, spec_, in_ch, rng.split(si)));
        if (st.kind == StageSpec::Kind::Fir) running_len = running_len - st.kernel_len + 1;
        in_ch = st.out_channels;
    }
    if (running_len < frame.frame_shift)
        throw std::invalid_argument("CModel: fewer valid samples than frame shift");
}

CModel::CModel(const CModel& other) : spec_(other.spec_), frame_(other.frame_) {
    for (const auto& s : other.stages_) stages_.push_back(s->clone());
}

CModel& CModel::operator=(const CModel& other) {
    if (this == &other) return *this;
    spec_ = other.spec_;
    frame_ = other.frame_;
    stages_.clear();
    for (const auto& s : other.stages_) stages_.push_back(s->clone());
    return *this;
}

std::size_t CModel::param_count() const {
    std::size_t n = 0;
    for (const auto& s : stages_) n += s->params().size();
    return n;
}

CTensor CModel::forward(const CTensor& x_frames) const {
    CTensor cur = x_frames;
    for (std::size_t si = 0; si < stages_.size(); ++si) {
        try {
            cur = stages_[si]->forward(cur);
        } catch (const ShapeError& e) {
            throw ShapeError("stage " + std::to_string(si) + " (" + stages_[si]->name() +
                             "): " + e.what());
        }
    }
    return cur;
}

CTensor CModel::predict(const CTensor& x_frames) const {
    CTensor full = forward(x_frames);
    const Shape4 s = full.shape();
    const std::size_t R = frame_.frame_shift;
    CTensor out({s.t, s.k, s.c, R});
    for (std::size_t t = 0; t < s.t; ++t)
        for (std::size_t k = 0; k < s.k; ++k)
            for (std::size_t c = 0; c < s.c; ++c)
                for (std::size_t m = 0; m < R; ++m) {
                    out.re(t, k, c, m) = full.re(t, k, c, s.m - R + m);
                    out.im(t, k, c, m) = full.im(t, k, c, s.m - R + m);
                }
    return out;
}

std::vector<std::vector<double>> CModel::backward(const CTensor& x_frames,
                                                  const CTensor& grad_pred) const {
    std::vector<CTensor> inputs;
    inputs.reserve(stages_.size());
    CTensor cur = x_frames;
    for (const auto& s : stages_) {
        inputs.push_back(cur);
        cur = s->forward(cur);
    }
    const Shape4 fs = cur.shape();
    const std::size_t R = frame_.frame_shift;
    require_shape(grad_pred.shape(), {fs.t, fs.k, fs.c, R}, "CModel backward");

    CTensor up(fs);
    for (std::size_t t = 0; t < fs.t; ++t)
        for (std::size_t k = 0; k < fs.k; ++k)
            for (std::size_t c = 0; c < fs.c; ++c)
                for (std::size_t m = 0; m < R; ++m) {
                    up.re(t, k, c, fs.m - R + m) = grad_pred.re(t, k, c, m);
                    up.im(t, k, c, fs.m - R + m) = grad_pred.im(t, k, c, m);
                }

    std::vector<std::vector<double>> grads(stages_.size());
    for (std::size_t si = stages_.size(); si-- > 0;) {
        grads[si].assign(stages_[si]->params().size(), 0.0);
        up = stages_[si]->backward(inputs[si], up, grads[si]);
    }
    return grads;
}

CTensor CModel::forward_backward(const CTensor& x_frames, const CTensor& target,
                                 double& loss, std::vector<std::vector<double>>& grads) const {
    std::vector<CTensor> inputs;
    inputs.reserve(stages_.size());
    CTensor cur = x_frames;
    for (const auto& s : stages_) {
        inputs.push_back(cur);
        cur = s->forward(cur);
    }
    const Shape4 fs = cur.shape();
    const std::size_t R = frame_.frame_shift;
    require_shape(target.shape(), {fs.t, fs.k, fs.c, R}, "forward_backward target");

    CTensor pred({fs.t, fs.k, fs.c, R});
    CTensor up(fs);
    loss = 0.0;
    for (std::size_t t = 0; t < fs.t; ++t)
        for (std::size_t k = 0; k < fs.k; ++k)
            for (std::size_t c = 0; c < fs.c; ++c)
                for (std::size_t m = 0; m < R; ++m) {
                    const double pr = cur.re(t, k, c, fs.m - R + m);
                    const double pi = cur.im(t, k, c, fs.m - R + m);
                    const double er = pr - target.re(t, k, c, m);
                    const double ei = pi - target.im(t, k, c, m);
                    pred.re(t, k, c, m) = pr;
                    pred.im(t, k, c, m) = pi;
                    loss += er * er + ei * ei;
                    up.re(t, k, c, fs.m - R + m) = 2.0 * er;
                    up.im(t, k, c, fs.m - R + m) = 2.0 * ei;
                }

    grads.resize(stages_.size());
    for (std::size_t si = stages_.size(); si-- > 0;) {
        grads[si].assign(stages_[si]->params().size(), 0.0);
        up = stages_[si]->backward(inputs[si], up, grads[si]);
    }
    return pred;
}

std::vector<std::vector<double>> CModel::snapshot_params() const {
    std::vector<std::vector<double>> snap;
    for (const auto& s : stages_) snap.push_back(s->params());
    return snap;
}

void CModel::restore_params(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != stages_.size())
        throw std::invalid_argument("restore_params: stage count mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) {
        if (snap[i].size() != stages_[i]->params().size())
            throw std::invalid_argument("restore_params: stage " + std::to_string(i) +
                                        " length mismatch");
        stages_[i]->params() = snap[i];
    }
}

void CModel::save(const std::string& path) const { save_impl(path, spec_, frame_, snapshot_params()); }

CModel CModel::load(const std::string& path) {
    ModelSpec spec;
    FrameSpec frame;
    std::vector<std::vector<double>> params;
    load_impl(path, spec, frame, params);
    CModel m(spec, frame, Rng(0));
    m.restore_params(params);
    return m;
}

}  // namespace mkid
