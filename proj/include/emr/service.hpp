#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "emr/engine.hpp"
#include "emr/json_io.hpp"

namespace httplib {
class Server;
}

namespace emr {

enum class SortOrder { CorpusOrder, ProbabilityAscending, ProbabilityDescending, Uncertainty };

std::string_view to_string(SortOrder order);
SortOrder parse_sort_order(std::string_view name);  // corpus | asc | desc | uncertain

// Review state of the single expert using the service. Not persisted.
struct SessionState {
    std::optional<std::pair<std::size_t, std::size_t>> active;  // (document, variable)
    std::set<std::pair<std::size_t, std::size_t>> visited;
    std::optional<WordTree> tree;                                // active word-tree filter
    std::size_t sort_variable = 0;
    SortOrder sort = SortOrder::CorpusOrder;
};

struct ApiRequest {
    std::string method;
    std::string path;
    std::multimap<std::string, std::string> params;
    std::string body;

    std::optional<std::string> param(const std::string& key) const;
    std::vector<std::string> params_of(const std::string& key) const;
};

struct ApiResponse {
    int status = 200;
    json body;
};

// JSON API over an Engine. Each response is computed from one prediction
// snapshot. Errors come back as {"code", "message"}.
class Api {
public:
    explicit Api(Engine& engine);

    ApiResponse handle(const ApiRequest& request);

    // Document rows of the grid in display order for the given sort/filter.
    std::vector<std::size_t> row_order(const Snapshot& snap, std::size_t variable, SortOrder order,
                                       const std::optional<std::vector<std::size_t>>& filter) const;

    SessionState session() const;

private:
    ApiResponse dispatch(const ApiRequest& request);
    ApiResponse get_grid(const ApiRequest& request);
    ApiResponse get_document(const ApiRequest& request, const std::string& doc_id);
    ApiResponse get_stats(const ApiRequest& request);
    ApiResponse get_wordtree(const ApiRequest& request);
    ApiResponse delete_filter();
    ApiResponse get_feedback();
    ApiResponse post_feedback(const ApiRequest& request);
    ApiResponse post_resolve(const ApiRequest& request, std::uint64_t id);
    ApiResponse post_retrain();
    ApiResponse post_visit(const ApiRequest& request);
    ApiResponse get_next(const ApiRequest& request);
    ApiResponse get_evaluate(const ApiRequest& request);
    ApiResponse get_session();
    ApiResponse get_health();

    std::size_t variable_param(const ApiRequest& request, const char* key) const;
    std::optional<std::vector<std::size_t>> filter_param(const ApiRequest& request) const;
    json ledger_state() const;

    Engine& engine_;
    mutable std::mutex session_mutex_;
    SessionState session_;
};

struct ServiceConfig {
    std::filesystem::path corpus;
    std::filesystem::path seed_labels;
    std::filesystem::path data_dir;
    std::optional<std::filesystem::path> boilerplate;
    std::optional<std::filesystem::path> static_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    double tau = 0.1;
    double c = 1.0;
};

// Loads the corpus, restores or trains models, and serves the API over HTTP.
class Service {
public:
    explicit Service(const ServiceConfig& config);
    ~Service();

    Engine& engine() { return *engine_; }
    Api& api() { return *api_; }

    // Binds the configured port (0 picks a free one) and serves on a
    // background thread. Returns the bound port.
    int start();
    // Binds and serves on the calling thread until stop().
    void run();
    void stop();
    bool running() const;

private:
    void install_routes();

    ServiceConfig config_;
    std::unique_ptr<Engine> engine_;
    std::unique_ptr<Api> api_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

}  // namespace emr
