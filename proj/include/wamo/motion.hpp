#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wamo/rng.hpp"
#include "wamo/tensor.hpp"

namespace wamo {

// [T x J x 3] joint trajectories, meters. Values are kept float32-representable
// so the on-disk format round-trips bit-exactly.
struct MotionSequence {
    std::size_t frames = 0;
    std::size_t joints = 0;
    Tensor coords;  // shape {T, J, 3}

    std::size_t channels() const { return joints * 3; }
    // Same memory layout viewed as [T x J*3]; the encoder works per channel.
    Tensor flat() const { return coords.reshaped({frames, joints * 3}); }
};

struct TextDescription {
    std::vector<std::string> tokens;
    int class_id = 0;      // generator metadata, not shown to the model
    std::string caption;   // original phrase, kept for the on-disk format
};

struct NormalizationStats {
    std::vector<double> mean;  // per channel, J*3
    std::vector<double> std;   // per channel, J*3
};

struct MotionTextPair {
    MotionSequence motion;
    TextDescription text;
};

struct Corpus {
    std::vector<MotionTextPair> pairs;
    std::string split = "all";  // train / val / test / all
    std::uint64_t seed = 0;
    std::size_t n_classes = 0;
    NormalizationStats normalization;
};

struct ShuffleRecord {
    std::vector<std::size_t> permutation;  // output frame i = input frame permutation[i]
    std::vector<std::size_t> original_labels;  // g_o
    std::vector<std::size_t> shuffled_labels;  // g_s
};

// --- synthesis -------------------------------------------------------------

// Per-sample template parameters; drawn once per pair, shared across frames.
struct SampleParams {
    int side = 0;        // 0 left, 1 right
    int speed_bucket = 0;  // 0 slow, 1 fast
    int amp_bucket = 0;    // 0 slight, 1 wide
    double amp_jitter = 1.0;
    double freq_jitter = 1.0;
    double phase = 0.0;
};

std::size_t template_count();
// Deterministic trajectory for one class template. Composite classes are two
// half-length action blocks whose content depends only on the block-local
// clock, so swapping the order permutes frames without changing their values.
MotionSequence synth_motion(int class_id, std::size_t T, std::size_t J, const SampleParams& p);
std::string caption_for(int class_id, int variant, const SampleParams& p);

Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_pairs, std::size_t n_classes,
                                 std::size_t T, std::size_t J);

// --- persistence (wamo-corpus/1: <base>.manifest.json + <base>.data.bin) ----

void save_corpus(const Corpus& corpus, const std::string& base_path);
Corpus load_corpus(const std::string& base_path);

// --- transforms --------------------------------------------------------------

NormalizationStats compute_stats(const std::vector<MotionTextPair>& pairs);
MotionSequence normalize(const MotionSequence& motion, const NormalizationStats& stats);
MotionSequence denormalize(const MotionSequence& motion, const NormalizationStats& stats);

// Extends T to the next multiple of `block` by circular repetition.
MotionSequence pad_to_multiple(const MotionSequence& motion, std::size_t block);
// Same, applied to every pair of a corpus.
Corpus pad_corpus(const Corpus& corpus, std::size_t block);

// Group labels g_o: T/lambda_g consecutive frames share a label; a remainder
// is absorbed by the last group.
std::vector<std::size_t> group_labels(std::size_t T, std::size_t lambda_g);

std::pair<MotionSequence, ShuffleRecord> shuffle_sequence(const MotionSequence& motion,
                                                          std::size_t lambda_g, double lambda_s,
                                                          Rng& rng);

std::vector<std::string> tokenize(const std::string& caption);

// Index-based split: first 80% train, next 10% val, rest test. Normalization
// stats are computed on the train part and copied onto all three.
struct SplitCorpora {
    Corpus train, val, test;
};
SplitCorpora split_corpus(const Corpus& corpus);

}  // namespace wamo
