#include "dflow/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dflow/errors.hpp"

namespace dflow {

void write_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoFailure("write_dataset: cannot open " + path);
    out << data.D << " " << data.K << " " << data.seqs.size() << " " << data.task << "\n";
    for (std::size_t i = 0; i < data.seqs.size(); ++i) {
        for (std::size_t d = 0; d < data.seqs[i].size(); ++d) {
            if (d) out << " ";
            out << data.seqs[i][d];
        }
        if (data.has_context()) {
            for (int c : data.contexts[i]) out << " " << c;
        }
        out << "\n";
    }
    if (!out) throw IoFailure("write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("read_dataset: cannot open " + path);
    Dataset data;
    std::size_t n = 0;
    std::string header;
    if (!std::getline(in, header)) throw IoFailure("read_dataset: empty file " + path);
    {
        std::istringstream hs(header);
        if (!(hs >> data.D >> data.K >> n >> data.task)) {
            throw IoFailure("read_dataset: bad header in " + path);
        }
    }
    const bool with_context = data.task == "addition";
    const std::size_t ctx_cols = with_context ? 2 * data.D : 0;
    if (with_context) data.context_alphabet = 10;
    data.seqs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<int> seq(data.D);
        for (std::size_t d = 0; d < data.D; ++d) {
            if (!(in >> seq[d])) throw IoFailure("read_dataset: truncated data in " + path);
        }
        std::vector<int> ctx(ctx_cols);
        for (std::size_t c = 0; c < ctx_cols; ++c) {
            if (!(in >> ctx[c])) throw IoFailure("read_dataset: truncated context in " + path);
        }
        data.seqs.push_back(std::move(seq));
        if (with_context) data.contexts.push_back(std::move(ctx));
    }
    return data;
}

// --- full rank -----------------------------------------------------------------

std::vector<int> index_to_sequence(std::size_t index, std::size_t D, int K) {
    std::vector<int> seq(D);
    for (std::size_t d = D; d-- > 0;) {
        seq[d] = static_cast<int>(index % static_cast<std::size_t>(K));
        index /= static_cast<std::size_t>(K);
    }
    return seq;
}

std::size_t sequence_to_index(std::span<const int> seq, int K) {
    std::size_t idx = 0;
    for (int s : seq) idx = idx * static_cast<std::size_t>(K) + static_cast<std::size_t>(s);
    return idx;
}

FullRankSpec make_full_rank_spec(std::size_t D, int K, std::uint64_t seed) {
    std::size_t total = 1;
    for (std::size_t d = 0; d < D; ++d) {
        total *= static_cast<std::size_t>(K);
        if (total > 1'000'000) throw TooLarge("make_full_rank_spec: K^D exceeds 1e6");
    }
    FullRankSpec spec;
    spec.D = D;
    spec.K = K;
    spec.seed = seed;
    spec.probabilities.resize(total);
    // Dirichlet(alpha=1): normalized unit exponentials.
    Rng rng(Rng::derive(seed, 0));
    double sum = 0.0;
    for (double& p : spec.probabilities) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        p = -std::log(u);
        sum += p;
    }
    for (double& p : spec.probabilities) p /= sum;
    return spec;
}

FullRankData gen_full_rank(const FullRankSpec& spec, std::size_t n) {
    FullRankData out;
    out.data.D = spec.D;
    out.data.K = spec.K;
    out.data.task = "full_rank";
    out.data.seqs.reserve(n);

    std::vector<double> cdf(spec.probabilities.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        acc += spec.probabilities[i];
        cdf[i] = acc;
    }
    Rng rng(Rng::derive(spec.seed, 1));
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform() * acc;
        const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
        const std::size_t idx = std::min<std::size_t>(it - cdf.begin(), cdf.size() - 1);
        out.data.seqs.push_back(index_to_sequence(idx, spec.D, spec.K));
    }
    for (double p : spec.probabilities) {
        if (p > 0.0) out.exact_entropy -= p * std::log(p);
    }
    return out;
}

// --- discretized mixture of Gaussians ---------------------------------------------

int mog_bin(double value) {
    const double v = std::clamp(value, -2.25, 2.25);
    // Multiplying by 20 keeps bin edges exact in binary (0.05 is not exact).
    int bin = static_cast<int>(std::floor((v + 2.25) * 20.0));
    return std::clamp(bin, 0, 89);
}

Dataset gen_discretized_mog(std::size_t n, std::uint64_t seed) {
    Dataset data;
    data.D = 2;
    data.K = 90;
    data.task = "mog";
    data.seqs.reserve(n);
    constexpr double kPi = 3.14159265358979323846;
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const int comp = rng.uniform_int(8);
        const double angle = 2.0 * kPi * static_cast<double>(comp) / 8.0;
        const double x = 2.0 * std::cos(angle) + rng.normal(0.0, 0.1);
        const double y = 2.0 * std::sin(angle) + rng.normal(0.0, 0.1);
        data.seqs.push_back({mog_bin(x), mog_bin(y)});
    }
    return data;
}

// --- addition ----------------------------------------------------------------------

Dataset gen_addition(const AdditionSpec& spec, std::size_t n) {
    const std::size_t D = spec.digits;
    if (D < 1) throw Error("gen_addition: digits must be >= 1");
    Dataset data;
    data.D = D;
    data.K = 10;
    data.task = "addition";
    data.context_alphabet = 10;
    data.seqs.reserve(n);
    data.contexts.reserve(n);
    Rng rng(spec.seed);
    std::vector<int> a(D), b(D);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < D; ++d) a[d] = rng.uniform_int(10);
        for (std::size_t d = 0; d < D; ++d) b[d] = rng.uniform_int(10);
        // Digit-wise sum right to left; the overflow digit is dropped.
        std::vector<int> target(D);
        int carry = 0;
        for (std::size_t d = D; d-- > 0;) {
            const int s = a[d] + b[d] + carry;
            target[d] = s % 10;
            carry = s / 10;
        }
        std::vector<int> ctx;
        ctx.reserve(2 * D);
        ctx.insert(ctx.end(), a.begin(), a.end());
        ctx.insert(ctx.end(), b.begin(), b.end());
        data.seqs.push_back(std::move(target));
        data.contexts.push_back(std::move(ctx));
    }
    return data;
}

// --- Potts -----------------------------------------------------------------------

double neighbor_agreement(std::span<const int> flat, std::size_t rows, std::size_t cols) {
    double agree = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const int s = flat[r * cols + c];
            if (c + 1 < cols && s == flat[r * cols + c + 1]) agree += 1.0;
            if (r + 1 < rows && s == flat[(r + 1) * cols + c]) agree += 1.0;
        }
    }
    return agree;
}

double potts_log_mass(std::span<const int> flat, const PottsSpec& spec) {
    return spec.coupling * neighbor_agreement(flat, spec.rows, spec.cols);
}

Dataset gen_potts(const PottsSpec& spec, std::size_t n) {
    if (spec.states < 2) throw Error("gen_potts: states must be >= 2");
    const std::size_t sites = spec.rows * spec.cols;
    Dataset data;
    data.D = sites;
    data.K = spec.states;
    data.task = "potts";
    data.seqs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Independent chain per sample with a derived seed.
        Rng rng(Rng::derive(spec.seed, i));
        std::vector<int> lattice(sites);
        for (int& s : lattice) s = rng.uniform_int(spec.states);
        for (std::size_t sweep = 0; sweep < spec.sweeps; ++sweep) {
            for (std::size_t r = 0; r < spec.rows; ++r) {
                for (std::size_t c = 0; c < spec.cols; ++c) {
                    const std::size_t site = r * spec.cols + c;
                    const int old_state = lattice[site];
                    const int proposal = rng.uniform_int(spec.states);
                    double delta = 0.0;
                    const auto bump = [&](std::size_t other) {
                        delta += (proposal == lattice[other] ? 1.0 : 0.0) -
                                 (old_state == lattice[other] ? 1.0 : 0.0);
                    };
                    if (c > 0) bump(site - 1);
                    if (c + 1 < spec.cols) bump(site + 1);
                    if (r > 0) bump(site - spec.cols);
                    if (r + 1 < spec.rows) bump(site + spec.cols);
                    const double log_accept = spec.coupling * delta;
                    if (log_accept >= 0.0 || rng.uniform() < std::exp(log_accept)) {
                        lattice[site] = proposal;
                    }
                }
            }
        }
        data.seqs.push_back(std::move(lattice));
    }
    return data;
}

PottsExact potts_exact_nll(const Dataset& data, const PottsSpec& spec) {
    const std::size_t sites = spec.rows * spec.cols;
    double total = 1.0;
    for (std::size_t s = 0; s < sites; ++s) {
        total *= static_cast<double>(spec.states);
        if (total > 1e6) throw TooLarge("potts_exact_nll: states^(rows*cols) exceeds 1e6");
    }
    const std::size_t n_states = static_cast<std::size_t>(total);

    // log Z and E_p[agreement] by full enumeration, log-sum-exp stabilized.
    double max_lm = -1e300;
    std::vector<double> log_mass(n_states);
    for (std::size_t i = 0; i < n_states; ++i) {
        const std::vector<int> seq = index_to_sequence(i, sites, spec.states);
        log_mass[i] = potts_log_mass(seq, spec);
        max_lm = std::max(max_lm, log_mass[i]);
    }
    double z_shift = 0.0;
    double mean_agree_num = 0.0;
    for (std::size_t i = 0; i < n_states; ++i) {
        const double w = std::exp(log_mass[i] - max_lm);
        z_shift += w;
        if (spec.coupling != 0.0) mean_agree_num += w * (log_mass[i] / spec.coupling);
    }
    PottsExact out;
    out.log_z = max_lm + std::log(z_shift);
    const double mean_agree = spec.coupling != 0.0 ? mean_agree_num / z_shift : 0.0;
    out.entropy = out.log_z - spec.coupling * mean_agree;
    if (spec.coupling == 0.0) out.entropy = out.log_z;

    double nll = 0.0;
    for (const auto& seq : data.seqs) {
        nll += out.log_z - potts_log_mass(seq, spec);
    }
    out.dataset_nll = data.seqs.empty() ? 0.0 : nll / static_cast<double>(data.seqs.size());
    return out;
}

// --- character corpus -----------------------------------------------------------

CharCorpus load_char_corpus(const std::string& path, std::size_t seq_len,
                            const std::optional<std::string>& vocab_chars) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("load_char_corpus: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.empty()) throw EmptyCorpus("load_char_corpus: " + path + " is empty");
    if (seq_len < 1) throw Error("load_char_corpus: seq_len must be >= 1");

    CharCorpus corpus;
    CharVocab& vocab = corpus.vocab;
    if (vocab_chars) {
        for (char c : *vocab_chars) {
            if (!vocab.char_to_id.count(c)) {
                vocab.char_to_id[c] = static_cast<int>(vocab.id_to_char.size());
                vocab.id_to_char.push_back(c);
            }
        }
    } else {
        // Build from file; ids follow byte order for determinism.
        std::vector<bool> present(256, false);
        for (unsigned char c : text) present[c] = true;
        for (int c = 0; c < 256; ++c) {
            if (present[c]) {
                vocab.char_to_id[static_cast<char>(c)] = static_cast<int>(vocab.id_to_char.size());
                vocab.id_to_char.push_back(static_cast<char>(c));
            }
        }
    }
    vocab.pad_id = static_cast<int>(vocab.vocab_size());
    vocab.unk_id = vocab.pad_id + 1;
    vocab.num_classes = vocab.unk_id + 1;

    Dataset& data = corpus.data;
    data.D = seq_len;
    data.K = vocab.num_classes;
    data.task = "char_lm";
    const std::size_t n_windows = (text.size() + seq_len - 1) / seq_len;
    data.seqs.reserve(n_windows);
    for (std::size_t w = 0; w < n_windows; ++w) {
        std::vector<int> seq(seq_len, vocab.pad_id);
        for (std::size_t i = 0; i < seq_len; ++i) {
            const std::size_t pos = w * seq_len + i;
            if (pos >= text.size()) break;
            const auto it = vocab.char_to_id.find(text[pos]);
            seq[i] = it == vocab.char_to_id.end() ? vocab.unk_id : it->second;
        }
        data.seqs.push_back(std::move(seq));
    }
    return corpus;
}

std::string synthesize_text_corpus(std::size_t n_chars, std::uint64_t seed) {
    static const std::vector<std::string> words = {
        "the",   "quick",  "brown",  "fox",    "jumps",  "over",   "lazy",   "dog",
        "stone", "river",  "light",  "shadow", "wind",   "forest", "meadow", "winter",
        "early", "morning","walker", "crossed","bridge", "toward", "market", "square",
        "where", "traders","gather", "before", "sunrise","carts",  "loaded", "with",
        "apples","grain",  "wool",   "moved",  "slowly", "along",  "road",   "while",
        "birds", "called", "from",   "tall",   "trees",  "beside", "water",  "mill",
        "old",   "keeper", "watched","clouds", "drift",  "past",   "hills",  "and",
        "noted", "each",   "change", "season", "brings", "rain",   "falls",  "soft",
        "upon",  "fields", "green",  "after",  "long",   "dry",    "summer", "ends"};
    const std::size_t W = words.size();

    // Skewed successor table: each word strongly prefers a few followers, so
    // the text carries word-level structure far below unigram entropy.
    std::vector<std::array<std::size_t, 4>> successors(W);
    Rng table_rng(Rng::derive(seed, 0));
    for (std::size_t i = 0; i < W; ++i) {
        for (auto& s : successors[i]) s = static_cast<std::size_t>(table_rng.uniform_int(static_cast<int>(W)));
    }

    std::string text;
    text.reserve(n_chars + 16);
    Rng rng(Rng::derive(seed, 1));
    std::size_t current = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(W)));
    while (text.size() < n_chars) {
        if (!text.empty()) text += ' ';
        text += words[current];
        const double u = rng.uniform();
        if (u < 0.45) current = successors[current][0];
        else if (u < 0.70) current = successors[current][1];
        else if (u < 0.85) current = successors[current][2];
        else if (u < 0.93) current = successors[current][3];
        else current = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(W)));
    }
    text.resize(n_chars);
    return text;
}

} // namespace dflow
