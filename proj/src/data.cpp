#include "fat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fat {

namespace {

bool looks_numeric(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::vector<std::string> split_fields(const std::string& line, const char* sep) {
    std::vector<std::string> out;
    std::size_t seplen = std::strlen(sep);
    std::size_t pos = 0;
    while (true) {
        std::size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + seplen;
    }
    return out;
}

std::uint32_t intern(const std::string& ext, std::vector<std::string>& ids,
                     std::unordered_map<std::string, std::uint32_t>& index) {
    auto it = index.find(ext);
    if (it != index.end()) return it->second;
    std::uint32_t id = static_cast<std::uint32_t>(ids.size());
    ids.push_back(ext);
    index.emplace(ext, id);
    return id;
}

void sort_per_user(RawLog& log) {
    // group by user, stable-sort each user's events by timestamp
    // (stability preserves input order on ties)
    std::stable_sort(log.interactions.begin(), log.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                         return a.user < b.user;
                     });
    auto begin = log.interactions.begin();
    while (begin != log.interactions.end()) {
        auto end = begin;
        while (end != log.interactions.end() && end->user == begin->user) ++end;
        std::stable_sort(begin, end, [](const Interaction& a, const Interaction& b) {
            return a.ts < b.ts;
        });
        begin = end;
    }
}

} // namespace

RawLog ingest(const std::string& path, LogFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest: cannot open " + path);
    RawLog log;
    const char* sep = format == LogFormat::Tsv ? "\t" : "::";
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_fields(line, sep);
        if (lineno == 1 && format == LogFormat::Tsv && !f.empty() &&
            !looks_numeric(f[0]) && f.size() >= 4 && !looks_numeric(f[3])) {
            continue;  // header row
        }
        if (f.size() < 4)
            throw std::runtime_error("ingest: malformed line " + std::to_string(lineno) +
                                     " in " + path);
        Interaction x;
        try {
            x.user = intern(f[0], log.catalog.user_ids, log.catalog.user_index);
            x.item = intern(f[1], log.catalog.item_ids, log.catalog.item_index);
            x.rating = std::stod(f[2]);
            x.ts = std::stoll(f[3]);
        } catch (const std::exception&) {
            throw std::runtime_error("ingest: malformed line " + std::to_string(lineno) +
                                     " in " + path);
        }
        if (x.ts < 0)
            throw std::runtime_error("ingest: negative timestamp at line " +
                                     std::to_string(lineno));
        log.interactions.push_back(x);
    }
    if (log.interactions.empty())
        throw std::runtime_error("ingest: no records in " + path);
    sort_per_user(log);
    return log;
}

RawLog filter_sparse(const RawLog& log, std::size_t min_user_records,
                     std::size_t min_item_records) {
    if (min_user_records < 1 || min_item_records < 1)
        throw std::invalid_argument("filter_sparse: thresholds must be >= 1");
    std::vector<Interaction> kept = log.interactions;
    while (true) {
        std::unordered_map<std::uint32_t, std::size_t> ucount, icount;
        for (const auto& x : kept) {
            ++ucount[x.user];
            ++icount[x.item];
        }
        std::vector<Interaction> next;
        next.reserve(kept.size());
        for (const auto& x : kept) {
            if (ucount[x.user] >= min_user_records && icount[x.item] >= min_item_records)
                next.push_back(x);
        }
        bool stable = next.size() == kept.size();
        kept = std::move(next);
        if (stable) break;
    }
    if (kept.empty())
        throw std::runtime_error("filter_sparse: filtering emptied the dataset");

    RawLog out;
    for (const auto& x : kept) {
        Interaction y = x;
        y.user = intern(log.catalog.user_ids[x.user], out.catalog.user_ids,
                        out.catalog.user_index);
        y.item = intern(log.catalog.item_ids[x.item], out.catalog.item_ids,
                        out.catalog.item_index);
        out.interactions.push_back(y);
    }
    sort_per_user(out);
    return out;
}

RawLog subsample_users(const RawLog& log, std::size_t max_users, std::uint64_t seed) {
    if (max_users >= log.catalog.n_users()) return log;
    std::vector<std::uint32_t> order(log.catalog.n_users());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::uint32_t>(i);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> keep(log.catalog.n_users(), false);
    for (std::size_t i = 0; i < max_users; ++i) keep[order[i]] = true;

    RawLog out;
    for (const auto& x : log.interactions) {
        if (!keep[x.user]) continue;
        Interaction y = x;
        y.user = intern(log.catalog.user_ids[x.user], out.catalog.user_ids,
                        out.catalog.user_index);
        y.item = intern(log.catalog.item_ids[x.item], out.catalog.item_ids,
                        out.catalog.item_index);
        out.interactions.push_back(y);
    }
    sort_per_user(out);
    return out;
}

SplitDataset chrono_split(const RawLog& log) {
    SplitDataset split;
    split.catalog = log.catalog;
    split.users.resize(log.catalog.n_users());

    std::size_t i = 0;
    const auto& xs = log.interactions;
    std::size_t dropped = 0;
    while (i < xs.size()) {
        std::size_t j = i;
        while (j < xs.size() && xs[j].user == xs[i].user) ++j;
        std::size_t n = j - i;
        std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                          std::llround(0.1 * static_cast<double>(n))));
        std::size_t n_valid = n_test;
        UserSegments& seg = split.users[xs[i].user];
        if (n_test + n_valid >= n) {
            std::cerr << "warning: user " << log.catalog.user_ids[xs[i].user]
                      << " has too few interactions for an 8:1:1 split; dropped\n";
            ++dropped;
        } else {
            std::size_t n_train = n - n_valid - n_test;
            for (std::size_t k = 0; k < n; ++k) {
                Event e{xs[i + k].item, xs[i + k].rating, xs[i + k].ts};
                if (k < n_train)
                    seg.train.push_back(e);
                else if (k < n_train + n_valid)
                    seg.valid.push_back(e);
                else
                    seg.test.push_back(e);
            }
        }
        i = j;
    }
    (void)dropped;
    return split;
}

std::vector<TrainingSample> build_training_samples(const SplitDataset& split,
                                                   std::size_t max_seq_len) {
    std::vector<TrainingSample> out;
    for (std::uint32_t u = 0; u < split.n_users(); ++u) {
        const auto& tr = split.users[u].train;
        for (std::size_t k = 1; k < tr.size(); ++k) {
            TrainingSample s;
            s.user = u;
            std::size_t begin = k > max_seq_len ? k - max_seq_len : 0;
            for (std::size_t p = begin; p < k; ++p) {
                s.prefix.push_back(tr[p].item);
                s.prefix_ts.push_back(tr[p].ts);
            }
            s.target = tr[k].item;
            s.target_ts = tr[k].ts;
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<std::vector<std::uint32_t>> build_item_user_index(const SplitDataset& split) {
    std::vector<std::vector<std::uint32_t>> index(split.n_items());
    for (std::uint32_t u = 0; u < split.n_users(); ++u)
        for (const auto& e : split.users[u].train) index[e.item].push_back(u);
    for (auto& entry : index) {
        std::sort(entry.begin(), entry.end());
        entry.erase(std::unique(entry.begin(), entry.end()), entry.end());
    }
    return index;
}

std::optional<EvalTarget> select_eval_target(std::uint32_t user,
                                             const SplitDataset& split,
                                             EvalPolicy policy, std::uint64_t seed) {
    const auto& seg = split.users.at(user);
    if (seg.test.empty()) return std::nullopt;
    EvalTarget t;
    t.user = user;
    for (const auto& e : seg.train) t.history.push_back(e.item);
    for (const auto& e : seg.valid) t.history.push_back(e.item);
    std::size_t pick = 0;
    if (policy == EvalPolicy::SeededRandom) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (user + 1)));
        pick = std::uniform_int_distribution<std::size_t>(0, seg.test.size() - 1)(rng);
    }
    t.target = seg.test[pick].item;
    t.target_ts = seg.test[pick].ts;
    for (const auto& e : seg.test) t.ground_truth.push_back(e.item);
    return t;
}

void load_categories(const std::string& path, Catalog& catalog) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_categories: cannot open " + path);
    std::unordered_map<std::string, std::uint32_t> cat_index;
    auto cat_id = [&](const std::string& name) {
        auto it = cat_index.find(name);
        if (it != cat_index.end()) return it->second;
        std::uint32_t id = static_cast<std::uint32_t>(catalog.category_names.size());
        catalog.category_names.push_back(name);
        cat_index.emplace(name, id);
        return id;
    };
    std::uint32_t unknown = cat_id("unknown");
    catalog.item_category.assign(catalog.n_items(), unknown);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto f = split_fields(line, "\t");
        if (f.size() < 2) continue;
        auto it = catalog.item_index.find(f[0]);
        if (it == catalog.item_index.end()) continue;
        catalog.item_category[it->second] = cat_id(f[1]);
    }
}

// ---------- binary cache ----------

namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(out, v);
}

void put_str(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("dataset cache: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    std::uint64_t v = get_u64(in);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

std::string get_str(std::istream& in) {
    std::uint64_t n = get_u64(in);
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw std::runtime_error("dataset cache: truncated string");
    return s;
}

void put_events(std::ostream& out, const std::vector<Event>& ev) {
    put_u64(out, ev.size());
    for (const auto& e : ev) {
        put_u64(out, e.item);
        put_f64(out, e.rating);
        put_u64(out, static_cast<std::uint64_t>(e.ts));
    }
}

std::vector<Event> get_events(std::istream& in) {
    std::vector<Event> ev(get_u64(in));
    for (auto& e : ev) {
        e.item = static_cast<std::uint32_t>(get_u64(in));
        e.rating = get_f64(in);
        e.ts = static_cast<std::int64_t>(get_u64(in));
    }
    return ev;
}

constexpr char kMagic[4] = {'F', 'A', 'T', 'D'};
constexpr unsigned char kVersion = 1;

} // namespace

void save_dataset_cache(const SplitDataset& split, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset_cache: cannot write " + path);
    out.write(kMagic, 4);
    out.put(static_cast<char>(kVersion));
    put_u64(out, split.n_users());
    put_u64(out, split.n_items());
    put_u64(out, split.catalog.category_names.size());
    for (const auto& s : split.catalog.user_ids) put_str(out, s);
    for (const auto& s : split.catalog.item_ids) put_str(out, s);
    for (const auto& s : split.catalog.category_names) put_str(out, s);
    put_u64(out, split.catalog.item_category.size());
    for (auto c : split.catalog.item_category) put_u64(out, c);
    for (const auto& u : split.users) {
        put_events(out, u.train);
        put_events(out, u.valid);
        put_events(out, u.test);
    }
    if (!out) throw std::runtime_error("save_dataset_cache: write failed: " + path);
}

SplitDataset load_dataset_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset_cache: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_dataset_cache: bad magic in " + path);
    int version = in.get();
    if (version != kVersion)
        throw std::runtime_error("load_dataset_cache: unsupported version");
    SplitDataset split;
    std::uint64_t nu = get_u64(in);
    std::uint64_t ni = get_u64(in);
    std::uint64_t nc = get_u64(in);
    split.catalog.user_ids.reserve(nu);
    for (std::uint64_t i = 0; i < nu; ++i) {
        split.catalog.user_ids.push_back(get_str(in));
        split.catalog.user_index.emplace(split.catalog.user_ids.back(),
                                         static_cast<std::uint32_t>(i));
    }
    for (std::uint64_t i = 0; i < ni; ++i) {
        split.catalog.item_ids.push_back(get_str(in));
        split.catalog.item_index.emplace(split.catalog.item_ids.back(),
                                         static_cast<std::uint32_t>(i));
    }
    for (std::uint64_t i = 0; i < nc; ++i)
        split.catalog.category_names.push_back(get_str(in));
    std::uint64_t ncat = get_u64(in);
    split.catalog.item_category.resize(ncat);
    for (auto& c : split.catalog.item_category)
        c = static_cast<std::uint32_t>(get_u64(in));
    split.users.resize(nu);
    for (auto& u : split.users) {
        u.train = get_events(in);
        u.valid = get_events(in);
        u.test = get_events(in);
    }
    return split;
}

} // namespace fat
