#pragma once

// Generators for the synthetic experiment suites plus a character-corpus
// loader, with exact ground-truth quantities where computable. Every
// generator is deterministic per seed.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dflow/rng.hpp"
#include "dflow/tensor.hpp"

namespace dflow {

struct Dataset {
    std::size_t D = 0;
    int K = 0;
    std::string task;
    std::vector<std::vector<int>> seqs;
    // Conditional tasks carry per-example context symbol rows.
    std::vector<std::vector<int>> contexts;
    int context_alphabet = 0;

    bool has_context() const { return !contexts.empty(); }
    std::size_t size() const { return seqs.size(); }
};

// UTF-8 text format: header "D K N task", then N lines of D integers
// (addition lines append the 2D context digits).
void write_dataset(const Dataset& data, const std::string& path);
Dataset read_dataset(const std::string& path);

// --- full-rank discrete distribution ----------------------------------------

// Probability table over all K^D outcomes, drawn once per seed from a
// symmetric Dirichlet with alpha = 1 (normalized unit exponentials).
struct FullRankSpec {
    std::size_t D = 0;
    int K = 0;
    std::uint64_t seed = 0;
    std::vector<double> probabilities;  // length K^D, sums to 1
};

FullRankSpec make_full_rank_spec(std::size_t D, int K, std::uint64_t seed);

struct FullRankData {
    Dataset data;
    double exact_entropy = 0.0;  // nats; the NLL floor
};

FullRankData gen_full_rank(const FullRankSpec& spec, std::size_t n);

// Sequence index <-> lexicographic symbol digits (position 0 most significant).
std::vector<int> index_to_sequence(std::size_t index, std::size_t D, int K);
std::size_t sequence_to_index(std::span<const int> seq, int K);

// --- discretized mixture of Gaussians ---------------------------------------

// 8 means evenly spaced on a circle of radius 2, per-axis variance 0.01,
// samples clamped to [-2.25, 2.25], bins of width 0.05: two categorical
// variables with 90 states each.
Dataset gen_discretized_mog(std::size_t n, std::uint64_t seed);
int mog_bin(double value);  // floor((v + 2.25) / 0.05) clamped to [0, 89]

// --- addition ----------------------------------------------------------------

struct AdditionSpec {
    std::size_t digits = 0;  // D digits per operand, base 10
    std::uint64_t seed = 0;
};

// Operands uniform over D-digit strings (leading zeros allowed); target is
// (a + b) mod 10^D, digits most significant first. Context rows hold the
// 2D operand digits (a then b, each most significant first).
Dataset gen_addition(const AdditionSpec& spec, std::size_t n);

// --- Potts models --------------------------------------------------------------

struct PottsSpec {
    std::size_t rows = 0, cols = 0;
    int states = 2;
    double coupling = 0.0;  // J
    std::size_t sweeps = 500;
    std::uint64_t seed = 0;
};

// Unnormalized log-mass: J * (number of agreeing 4-neighbor pairs).
double potts_log_mass(std::span<const int> flat, const PottsSpec& spec);
double neighbor_agreement(std::span<const int> flat, std::size_t rows, std::size_t cols);

// Each sample: uniform random lattice, then `sweeps` full Metropolis-Hastings
// sweeps (one proposed single-site uniform resample per site per sweep),
// flattened row-major.
Dataset gen_potts(const PottsSpec& spec, std::size_t n);

struct PottsExact {
    double log_z = 0.0;
    double entropy = 0.0;       // nats; NLL floor of the Potts distribution
    double dataset_nll = 0.0;   // mean of (log Z - J * agreement) over the dataset
};

// Full enumeration of states^(rows*cols) configurations; TooLarge beyond 1e6.
PottsExact potts_exact_nll(const Dataset& data, const PottsSpec& spec);

// --- character corpus -----------------------------------------------------------

struct CharVocab {
    std::map<char, int> char_to_id;
    std::vector<char> id_to_char;
    int pad_id = 0;
    int unk_id = 0;
    int num_classes = 0;  // vocab chars + pad + unk

    std::size_t vocab_size() const { return id_to_char.size(); }
};

struct CharCorpus {
    Dataset data;
    CharVocab vocab;
};

// Non-overlapping windows of seq_len symbols; a final partial window is
// padded with the reserved pad symbol. When vocab_chars is given, characters
// outside it map to the unknown symbol; otherwise the vocabulary is built
// from the file.
CharCorpus load_char_corpus(const std::string& path, std::size_t seq_len,
                            const std::optional<std::string>& vocab_chars = std::nullopt);

// Seeded word-salad text over the 27-character alphabet a-z plus space, with
// strong bigram structure; used to bundle a desk-scale corpus.
std::string synthesize_text_corpus(std::size_t n_chars, std::uint64_t seed);

} // namespace dflow
