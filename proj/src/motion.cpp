#include "wamo/motion.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wamo/error.hpp"

namespace wamo {

namespace {

using nlohmann::json;

// Joint roles by index mod 8: root, torso, head, left arm, right arm,
// left leg, right leg, hand.
constexpr double kBasePose[8][3] = {
    {0.00, 0.90, 0.00},   // root
    {0.00, 1.20, 0.00},   // torso
    {0.00, 1.60, 0.00},   // head
    {-0.40, 1.30, 0.00},  // left arm
    {0.40, 1.30, 0.00},   // right arm
    {-0.15, 0.45, 0.00},  // left leg
    {0.15, 0.45, 0.00},   // right leg
    {0.45, 1.00, 0.05},   // hand
};

enum Action { kWalk, kWave, kJump, kSquat };

struct ClassDef {
    bool composite;
    Action first;
    Action second;  // unused when !composite
};

// Composite templates first so a low n_classes yields an order-sensitive corpus.
constexpr ClassDef kClasses[] = {
    {true, kWalk, kWave},   // 0 walk then wave
    {true, kWave, kWalk},   // 1 wave then walk
    {true, kWalk, kJump},   // 2 walk then jump
    {true, kJump, kWalk},   // 3 jump then walk
    {false, kWalk, kWalk},  // 4 walk
    {false, kWave, kWave},  // 5 wave
    {false, kJump, kJump},  // 6 jump
    {false, kSquat, kSquat} // 7 squat
};

double speed_of(const SampleParams& p) {
    return (p.speed_bucket == 0 ? 0.75 : 1.4) * p.freq_jitter;
}
double amp_of(const SampleParams& p) {
    return (p.amp_bucket == 0 ? 0.7 : 1.3) * p.amp_jitter;
}

// Offset of joint role r at block-local time tau in [0,1). Every sampled
// attribute moves the trajectory: speed scales frequencies, amplitude scales
// offsets, side picks the leading limb, so each caption word is grounded.
void action_offset(Action action, double tau, const SampleParams& p, int role, double out[3]) {
    out[0] = out[1] = out[2] = 0.0;
    const double a = amp_of(p);
    const double sp = speed_of(p);
    const double ph = p.phase;
    const double lead = p.side == 0 ? 1.0 : -1.0;
    switch (action) {
        case kWalk: {
            const double gait = lead * std::sin(2.0 * M_PI * (2.0 * sp * tau + ph));
            const double bob = std::sin(4.0 * M_PI * (2.0 * sp * tau + ph));
            if (role == 5) out[2] += 0.30 * a * gait;
            if (role == 6) out[2] -= 0.30 * a * gait;
            if (role == 3) out[2] -= 0.18 * a * gait;
            if (role == 4) out[2] += 0.18 * a * gait;
            out[1] += 0.05 * a * bob;  // whole-body bob via shared term
            break;
        }
        case kWave: {
            const int arm = p.side == 0 ? 3 : 4;
            if (role == arm || role == 7) {
                const double w = 2.0 * M_PI * (10.0 * sp * tau + ph);
                out[0] += 0.25 * a * std::sin(w);
                out[1] += 0.15 * a * std::cos(w) + 0.3 * a;
            }
            break;
        }
        case kJump: {
            const double c = std::sin(2.0 * M_PI * (4.0 * sp * tau + ph));
            const double lift = c > 0.0 ? c * c : 0.0;
            out[1] += 0.45 * a * lift;
            if (role == 5 || role == 6) out[1] += 0.15 * a * lift;
            // side-dependent forward lean while airborne
            if (role <= 2) out[2] += 0.08 * a * lead * lift;
            break;
        }
        case kSquat: {
            const double dip = 0.5 - 0.5 * std::cos(2.0 * M_PI * (1.0 * sp * tau + ph));
            out[1] -= 0.35 * a * dip;
            if (role == 2) out[1] -= 0.10 * a * dip;
            // weight shifts over the supporting side
            if (role == 0 || role == 1) out[0] += 0.10 * a * lead * dip;
            break;
        }
    }
}

const char* speed_word(const SampleParams& p) { return p.speed_bucket == 0 ? "slowly" : "quickly"; }
const char* side_word(const SampleParams& p) { return p.side == 0 ? "left" : "right"; }
const char* amp_word(const SampleParams& p) { return p.amp_bucket == 0 ? "slightly" : "widely"; }

std::string fill(const std::string& tpl, const SampleParams& p) {
    std::string out;
    for (std::size_t i = 0; i < tpl.size(); ++i) {
        if (tpl[i] == '$' && i + 1 < tpl.size()) {
            switch (tpl[++i]) {
                case 's': out += speed_word(p); break;
                case 'd': out += side_word(p); break;
                case 'a': out += amp_word(p); break;
                default: out += tpl[i];
            }
        } else {
            out += tpl[i];
        }
    }
    return out;
}

const std::vector<std::vector<std::string>>& caption_templates() {
    static const std::vector<std::vector<std::string>> tpls = {
        {"a person walks $s on the $d foot then waves the $d arm $a",
         "someone strolls $s leading $d and then waves the $d hand $a"},
        {"a person waves the $d arm $a then walks $s on the $d foot",
         "someone waves the $d hand $a and then strolls $s leading $d"},
        {"a person walks $s on the $d foot then jumps $a leaning $d",
         "someone strolls $s leading $d and then hops $a toward the $d side"},
        {"a person jumps $a leaning $d then walks $s on the $d foot",
         "someone hops $a toward the $d side and then strolls $s leading $d"},
        {"a person walks forward $s starting on the $d foot swinging arms $a",
         "someone strolls ahead $s leading with the $d leg and swings $a"},
        {"a person waves the $d arm $a $s",
         "someone raises the $d hand and waves it $a $s"},
        {"a person jumps in place $a $s leaning to the $d side",
         "someone hops up and down $a $s tilted $d"},
        {"a person squats down $s $a shifting to the $d side",
         "someone crouches $s $a over the $d leg"},
    };
    return tpls;
}

float quantize(double x) {
    // volatile defeats the optimizer's elision of the narrowing round trip;
    // generated corpora must hold exactly float32-representable values.
    volatile float f = static_cast<float>(x);
    return f;
}

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::size_t template_count() { return sizeof(kClasses) / sizeof(kClasses[0]); }

MotionSequence synth_motion(int class_id, std::size_t T, std::size_t J, const SampleParams& p) {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= template_count())
        throw ValidationError("synth_motion: unknown class id");
    if (T == 0 || J == 0) throw ValidationError("synth_motion: empty shape");
    const ClassDef& def = kClasses[class_id];

    MotionSequence m;
    m.frames = T;
    m.joints = J;
    m.coords = Tensor({T, J, 3});
    for (std::size_t t = 0; t < T; ++t) {
        double tau = static_cast<double>(t) / static_cast<double>(T);
        Action act = def.first;
        if (def.composite) {
            if (tau < 0.5) {
                tau *= 2.0;
            } else {
                act = def.second;
                tau = 2.0 * (tau - 0.5);
            }
        }
        for (std::size_t j = 0; j < J; ++j) {
            const int role = static_cast<int>(j % 8);
            double off[3];
            action_offset(act, tau, p, role, off);
            for (int d = 0; d < 3; ++d)
                m.coords.at(t, j, d) = quantize(kBasePose[role][d] + off[d]);
        }
    }
    return m;
}

std::string caption_for(int class_id, int variant, const SampleParams& p) {
    const auto& tpls = caption_templates();
    const auto& variants = tpls.at(static_cast<std::size_t>(class_id));
    return fill(variants[static_cast<std::size_t>(variant) % variants.size()], p);
}

Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_pairs, std::size_t n_classes,
                                 std::size_t T, std::size_t J) {
    if (n_pairs == 0 || n_classes == 0 || T == 0 || J == 0)
        throw ValidationError("generate_synthetic_corpus: sizes must be positive");
    if (n_classes > n_pairs)
        throw ValidationError("generate_synthetic_corpus: n_classes exceeds n_pairs");
    if (n_classes > template_count())
        throw ValidationError("generate_synthetic_corpus: at most " +
                              std::to_string(template_count()) + " classes available");

    Rng rng(seed);
    Corpus corpus;
    corpus.seed = seed;
    corpus.n_classes = n_classes;
    corpus.split = "all";
    corpus.pairs.reserve(n_pairs);
    for (std::size_t i = 0; i < n_pairs; ++i) {
        const int cls = static_cast<int>(i % n_classes);
        SampleParams p;
        p.side = static_cast<int>(rng.below(2));
        p.speed_bucket = static_cast<int>(rng.below(2));
        p.amp_bucket = static_cast<int>(rng.below(2));
        p.amp_jitter = rng.uniform(0.9, 1.1);
        p.freq_jitter = rng.uniform(0.95, 1.05);
        p.phase = rng.uniform(0.0, 1.0);
        const int variant = static_cast<int>(rng.below(2));

        MotionTextPair pair;
        pair.motion = synth_motion(cls, T, J, p);
        pair.text.class_id = cls;
        pair.text.caption = caption_for(cls, variant, p);
        pair.text.tokens = tokenize(pair.text.caption);
        corpus.pairs.push_back(std::move(pair));
    }
    corpus.normalization = compute_stats(corpus.pairs);
    return corpus;
}

// ------------------------------------------------------------- persistence

void save_corpus(const Corpus& corpus, const std::string& base_path) {
    json manifest;
    manifest["format"] = "wamo-corpus/1";
    manifest["split"] = corpus.split;
    manifest["seed"] = corpus.seed;
    manifest["n_classes"] = corpus.n_classes;
    manifest["normalization"]["mean"] = corpus.normalization.mean;
    manifest["normalization"]["std"] = corpus.normalization.std;
    json jpairs = json::array();
    std::string blob;
    for (const auto& pair : corpus.pairs) {
        const MotionSequence& m = pair.motion;
        if (!m.coords.all_finite())
            throw ValidationError("save_corpus: non-finite motion value");
        json jp;
        jp["frames"] = m.frames;
        jp["joints"] = m.joints;
        jp["caption"] = pair.text.caption;
        jp["class_id"] = pair.text.class_id;
        jpairs.push_back(std::move(jp));
        for (std::size_t i = 0; i < m.coords.numel(); ++i)
            put_u32(blob, std::bit_cast<std::uint32_t>(quantize(m.coords[i])));
    }
    manifest["pairs"] = std::move(jpairs);

    std::ofstream mf(base_path + ".manifest.json", std::ios::binary);
    if (!mf) throw IoError("save_corpus: cannot write " + base_path + ".manifest.json");
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf) throw IoError("save_corpus: write failed for " + base_path + ".manifest.json");

    std::ofstream bf(base_path + ".data.bin", std::ios::binary);
    if (!bf) throw IoError("save_corpus: cannot write " + base_path + ".data.bin");
    bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    bf.close();
    if (!bf) throw IoError("save_corpus: write failed for " + base_path + ".data.bin");
}

Corpus load_corpus(const std::string& base_path) {
    std::ifstream mf(base_path + ".manifest.json", std::ios::binary);
    if (!mf) throw IoError("load_corpus: cannot read " + base_path + ".manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("load_corpus: bad manifest: ") + e.what());
    }
    const std::string fmt = manifest.value("format", "");
    if (fmt != "wamo-corpus/1")
        throw ValidationError("load_corpus: unsupported format version '" + fmt +
                              "' (expected wamo-corpus/1)");

    Corpus corpus;
    corpus.split = manifest.value("split", "all");
    corpus.seed = manifest.value("seed", std::uint64_t(0));
    corpus.n_classes = manifest.value("n_classes", std::size_t(0));
    corpus.normalization.mean = manifest["normalization"]["mean"].get<std::vector<double>>();
    corpus.normalization.std = manifest["normalization"]["std"].get<std::vector<double>>();

    std::ifstream bf(base_path + ".data.bin", std::ios::binary);
    if (!bf) throw IoError("load_corpus: cannot read " + base_path + ".data.bin");
    std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    std::size_t expected = 0;
    for (const auto& jp : manifest["pairs"])
        expected += jp["frames"].get<std::size_t>() * jp["joints"].get<std::size_t>() * 3 * 4;
    if (blob.size() != expected)
        throw ValidationError("load_corpus: blob length mismatch, expected " +
                              std::to_string(expected) + " bytes but found " +
                              std::to_string(blob.size()));

    const unsigned char* ptr = reinterpret_cast<const unsigned char*>(blob.data());
    for (const auto& jp : manifest["pairs"]) {
        MotionTextPair pair;
        pair.motion.frames = jp["frames"].get<std::size_t>();
        pair.motion.joints = jp["joints"].get<std::size_t>();
        pair.motion.coords = Tensor({pair.motion.frames, pair.motion.joints, 3});
        for (std::size_t i = 0; i < pair.motion.coords.numel(); ++i, ptr += 4) {
            float f = std::bit_cast<float>(get_u32(ptr));
            pair.motion.coords[i] = static_cast<double>(f);
        }
        if (!pair.motion.coords.all_finite())
            throw ValidationError("load_corpus: non-finite motion value");
        pair.text.caption = jp["caption"].get<std::string>();
        pair.text.class_id = jp["class_id"].get<int>();
        pair.text.tokens = tokenize(pair.text.caption);
        corpus.pairs.push_back(std::move(pair));
    }
    return corpus;
}

// -------------------------------------------------------------- transforms

NormalizationStats compute_stats(const std::vector<MotionTextPair>& pairs) {
    if (pairs.empty()) return {};
    const std::size_t C = pairs[0].motion.channels();
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    std::size_t count = 0;
    for (const auto& pair : pairs) {
        const MotionSequence& m = pair.motion;
        if (m.channels() != C) throw ValidationError("compute_stats: channel count mismatch");
        for (std::size_t t = 0; t < m.frames; ++t)
            for (std::size_t c = 0; c < C; ++c) mean[c] += m.coords[t * C + c];
        count += m.frames;
    }
    for (std::size_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(count);
    for (const auto& pair : pairs) {
        const MotionSequence& m = pair.motion;
        for (std::size_t t = 0; t < m.frames; ++t)
            for (std::size_t c = 0; c < C; ++c) {
                const double d = m.coords[t * C + c] - mean[c];
                var[c] += d * d;
            }
    }
    NormalizationStats stats;
    stats.mean = std::move(mean);
    stats.std.resize(C);
    for (std::size_t c = 0; c < C; ++c) stats.std[c] = std::sqrt(var[c] / static_cast<double>(count));
    return stats;
}

namespace {

void check_stats(const MotionSequence& motion, const NormalizationStats& stats) {
    if (stats.mean.size() != motion.channels() || stats.std.size() != motion.channels())
        throw ValidationError("normalize: stats channel count mismatch");
    for (double v : stats.mean)
        if (!std::isfinite(v)) throw ValidationError("normalize: non-finite mean");
    for (double v : stats.std)
        if (!std::isfinite(v)) throw ValidationError("normalize: non-finite std");
}

double effective_std(double s) { return s > 1e-8 ? s : 1.0; }

}  // namespace

MotionSequence normalize(const MotionSequence& motion, const NormalizationStats& stats) {
    check_stats(motion, stats);
    MotionSequence out = motion;
    const std::size_t C = motion.channels();
    for (std::size_t t = 0; t < motion.frames; ++t)
        for (std::size_t c = 0; c < C; ++c) {
            double& v = out.coords[t * C + c];
            v = (v - stats.mean[c]) / effective_std(stats.std[c]);
        }
    return out;
}

MotionSequence denormalize(const MotionSequence& motion, const NormalizationStats& stats) {
    check_stats(motion, stats);
    MotionSequence out = motion;
    const std::size_t C = motion.channels();
    for (std::size_t t = 0; t < motion.frames; ++t)
        for (std::size_t c = 0; c < C; ++c) {
            double& v = out.coords[t * C + c];
            v = v * effective_std(stats.std[c]) + stats.mean[c];
        }
    return out;
}

MotionSequence pad_to_multiple(const MotionSequence& motion, std::size_t block) {
    if (block == 0) throw ValidationError("pad_to_multiple: zero block");
    if (motion.frames % block == 0) return motion;
    const std::size_t T = motion.frames;
    const std::size_t newT = ((T + block - 1) / block) * block;
    MotionSequence out;
    out.frames = newT;
    out.joints = motion.joints;
    out.coords = Tensor({newT, motion.joints, 3});
    const std::size_t C = motion.channels();
    for (std::size_t t = 0; t < newT; ++t)
        for (std::size_t c = 0; c < C; ++c)
            out.coords[t * C + c] = motion.coords[(t % T) * C + c];
    return out;
}

Corpus pad_corpus(const Corpus& corpus, std::size_t block) {
    Corpus out = corpus;
    for (auto& pair : out.pairs) pair.motion = pad_to_multiple(pair.motion, block);
    return out;
}

std::vector<std::size_t> group_labels(std::size_t T, std::size_t lambda_g) {
    if (lambda_g == 0 || lambda_g > T)
        throw ValidationError("group_labels: lambda_g must be in [1, T]");
    const std::size_t base = T / lambda_g;  // >= 1
    std::vector<std::size_t> g(T);
    for (std::size_t i = 0; i < T; ++i) g[i] = std::min(i / base, lambda_g - 1);
    return g;
}

std::pair<MotionSequence, ShuffleRecord> shuffle_sequence(const MotionSequence& motion,
                                                          std::size_t lambda_g, double lambda_s,
                                                          Rng& rng) {
    const std::size_t T = motion.frames;
    if (lambda_s < 0.0 || lambda_s > 1.0)
        throw ValidationError("shuffle_sequence: lambda_s must be in [0, 1]");
    ShuffleRecord rec;
    rec.original_labels = group_labels(T, lambda_g);
    rec.permutation.resize(T);
    for (std::size_t i = 0; i < T; ++i) rec.permutation[i] = i;

    const std::size_t n_sel = static_cast<std::size_t>(lambda_s * static_cast<double>(T));
    if (n_sel >= 2) {
        std::vector<std::size_t> sel = rng.sample_indices(T, n_sel);
        std::sort(sel.begin(), sel.end());
        std::vector<std::size_t> local(n_sel);
        for (std::size_t i = 0; i < n_sel; ++i) local[i] = i;
        rng.shuffle(local);
        for (std::size_t i = 0; i < n_sel; ++i) rec.permutation[sel[i]] = sel[local[i]];
    }

    MotionSequence out = motion;
    const std::size_t C = motion.channels();
    rec.shuffled_labels.resize(T);
    for (std::size_t i = 0; i < T; ++i) {
        const std::size_t src = rec.permutation[i];
        rec.shuffled_labels[i] = rec.original_labels[src];
        for (std::size_t c = 0; c < C; ++c) out.coords[i * C + c] = motion.coords[src * C + c];
    }
    return {std::move(out), std::move(rec)};
}

std::vector<std::string> tokenize(const std::string& caption) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : caption) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

SplitCorpora split_corpus(const Corpus& corpus) {
    const std::size_t n = corpus.pairs.size();
    const std::size_t n_train = (n * 8) / 10;
    const std::size_t n_val = n / 10;
    SplitCorpora out;
    out.train.split = "train";
    out.val.split = "val";
    out.test.split = "test";
    for (Corpus* c : {&out.train, &out.val, &out.test}) {
        c->seed = corpus.seed;
        c->n_classes = corpus.n_classes;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            out.train.pairs.push_back(corpus.pairs[i]);
        else if (i < n_train + n_val)
            out.val.pairs.push_back(corpus.pairs[i]);
        else
            out.test.pairs.push_back(corpus.pairs[i]);
    }
    out.train.normalization = compute_stats(out.train.pairs);
    out.val.normalization = out.train.normalization;
    out.test.normalization = out.train.normalization;
    return out;
}

}  // namespace wamo
