#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace fat {

struct Interaction {
    std::uint32_t user = 0;
    std::uint32_t item = 0;
    double rating = 1.0;
    std::int64_t ts = 0;
};

// Bijective external-id <-> dense-id vocabularies plus an optional
// item -> category map (dense category ids with names).
struct Catalog {
    std::vector<std::string> user_ids;   // dense -> external
    std::vector<std::string> item_ids;
    std::unordered_map<std::string, std::uint32_t> user_index;
    std::unordered_map<std::string, std::uint32_t> item_index;
    std::vector<std::uint32_t> item_category;  // dense item -> category id, empty if none
    std::vector<std::string> category_names;

    std::size_t n_users() const { return user_ids.size(); }
    std::size_t n_items() const { return item_ids.size(); }
    bool has_categories() const { return !item_category.empty(); }
};

struct RawLog {
    std::vector<Interaction> interactions;  // grouped by user, time-sorted within user
    Catalog catalog;
};

struct Event {
    std::uint32_t item = 0;
    double rating = 1.0;
    std::int64_t ts = 0;
};

struct UserSegments {
    std::vector<Event> train;
    std::vector<Event> valid;
    std::vector<Event> test;
};

struct SplitDataset {
    Catalog catalog;
    std::vector<UserSegments> users;  // indexed by dense user id

    std::size_t n_users() const { return users.size(); }
    std::size_t n_items() const { return catalog.n_items(); }
};

struct TrainingSample {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> prefix;
    std::vector<std::int64_t> prefix_ts;
    std::uint32_t target = 0;
    std::int64_t target_ts = 0;
};

struct EvalTarget {
    std::uint32_t user = 0;
    std::vector<std::uint32_t> history;  // train + validation items
    std::uint32_t target = 0;
    std::int64_t target_ts = 0;
    std::vector<std::uint32_t> ground_truth;  // all test items
};

enum class LogFormat { Tsv, MovieLensDat };

// Parses a TSV (user<TAB>item<TAB>rating<TAB>timestamp, optional header) or
// MovieLens user::item::rating::timestamp file. Per-user interactions come
// back sorted by (timestamp, input order).
RawLog ingest(const std::string& path, LogFormat format);

// Iterates removal until every user has >= min_user_records and every item
// >= min_item_records interactions; re-densifies vocabularies.
RawLog filter_sparse(const RawLog& log, std::size_t min_user_records,
                     std::size_t min_item_records);

// Seeded user subsample (keeps all interactions of the kept users).
RawLog subsample_users(const RawLog& log, std::size_t max_users, std::uint64_t seed);

// Per-user chronological 8:1:1 split: n_test = n_valid = max(1, round(0.1 n)).
// Users left with an empty train segment are dropped (with a warning on stderr).
SplitDataset chrono_split(const RawLog& log);

std::vector<TrainingSample> build_training_samples(const SplitDataset& split,
                                                   std::size_t max_seq_len);

// item -> sorted list of users with a train-segment interaction on it.
std::vector<std::vector<std::uint32_t>> build_item_user_index(const SplitDataset& split);

enum class EvalPolicy { FirstOfTest, SeededRandom };

// Returns nullopt when the user's test segment is empty.
std::optional<EvalTarget> select_eval_target(std::uint32_t user,
                                             const SplitDataset& split,
                                             EvalPolicy policy,
                                             std::uint64_t seed = 0);

// Attaches categories from a TSV `item<TAB>category` file. Items without a
// category get the reserved category "unknown".
void load_categories(const std::string& path, Catalog& catalog);

// Binary prepared-dataset cache (magic FATD).
void save_dataset_cache(const SplitDataset& split, const std::string& path);
SplitDataset load_dataset_cache(const std::string& path);

} // namespace fat
