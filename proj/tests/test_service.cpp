#include <doctest.h>

#include <fstream>
#include <numeric>

#include <httplib.h>

#include "emr/error.hpp"
#include "emr/service.hpp"
#include "emr/synthetic.hpp"
#include "oracles.hpp"

using namespace emr;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    SyntheticCorpus data = fixture::synthetic(60, 31, 4);
    std::vector<Label> seed;
    std::unique_ptr<Engine> engine;
    std::unique_ptr<Api> api;

    Fixture() {
        for (const auto& l : data.gold)
            if (*data.corpus.index_of(l.doc_id) < 15) seed.push_back(l);
        engine = std::make_unique<Engine>(data.corpus, seed, EngineConfig{}, std::nullopt, [] { return 1; });
        api = std::make_unique<Api>(*engine);
    }

    ApiResponse get(const std::string& path, std::multimap<std::string, std::string> params = {}) {
        return api->handle({"GET", path, std::move(params), ""});
    }
    ApiResponse post(const std::string& path, const json& body) {
        return api->handle({"POST", path, {}, body.dump()});
    }
    const std::string& var(std::size_t i) const { return data.corpus.variables()[i]; }
    const std::string& doc(std::size_t i) const { return data.corpus.documents()[i].doc_id; }
};

// Expected row order: Unknown cells after known ones for the probability
// orders, stable within ties.
std::vector<std::string> expected_order(const Fixture& f, std::size_t v, SortOrder order) {
    const auto snap = f.engine->snapshot();
    const auto& col = snap->models.predictions.cells[v];
    std::vector<std::size_t> idx(f.data.corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<std::size_t> known, unknown;
    for (auto d : idx) (col[d].cls == Class::Unknown ? unknown : known).push_back(d);
    std::vector<std::size_t> rows;
    if (order == SortOrder::Uncertainty) {
        rows = idx;
        std::stable_sort(rows.begin(), rows.end(), [&](auto a, auto b) {
            return std::fabs(col[a].probability - 0.5) < std::fabs(col[b].probability - 0.5);
        });
    } else {
        std::stable_sort(known.begin(), known.end(), [&](auto a, auto b) {
            return order == SortOrder::ProbabilityAscending ? col[a].probability < col[b].probability
                                                            : col[a].probability > col[b].probability;
        });
        rows = known;
        rows.insert(rows.end(), unknown.begin(), unknown.end());
    }
    std::vector<std::string> out;
    for (auto d : rows) out.push_back(f.doc(d));
    return out;
}

std::vector<std::string> grid_docs(const json& grid) {
    std::vector<std::string> out;
    for (const auto& r : grid["rows"]) out.push_back(r["doc_id"]);
    return out;
}

}  // namespace

TEST_CASE("grid sorting, skew and cells") {
    Fixture f;
    auto r = f.get("/api/grid");
    REQUIRE(r.status == 200);
    CHECK(r.body["rows"].size() == 60);
    CHECK(r.body["variables"].size() == 4);
    CHECK(r.body["sort"]["order"] == "corpus");
    CHECK(r.body["filter"]["active"] == false);

    for (auto [name, order] : {std::pair{"asc", SortOrder::ProbabilityAscending},
                               std::pair{"desc", SortOrder::ProbabilityDescending},
                               std::pair{"uncertain", SortOrder::Uncertainty}}) {
        r = f.get("/api/grid", {{"variable_sort", f.var(2) + ":" + name}});
        CHECK(grid_docs(r.body) == expected_order(f, 2, order));
    }
    // The sort sticks in the session.
    CHECK(grid_docs(f.get("/api/grid").body) == expected_order(f, 2, SortOrder::Uncertainty));

    const auto snap = f.engine->snapshot();
    const Histogram h = variable_distribution(snap->models.predictions.cells[1]);
    CHECK(r.body["skew"][f.var(1)]["true"] == h.n_true);
    CHECK(r.body["skew"][f.var(1)]["unknown"] == h.n_unknown);
    for (const auto& row : r.body["rows"])
        for (const auto& cell : row["cells"])
            CHECK((cell["class"] == "unknown") == cell["probability"].is_null());

    CHECK(f.get("/api/grid", {{"variable_sort", "nope:asc"}}).status == 400);
    CHECK(f.get("/api/grid", {{"variable_sort", f.var(0) + ":sideways"}}).body["code"] == "InvalidParameter");
}

TEST_CASE("word tree filter drives grid and stats") {
    Fixture f;
    const std::string phrase = f.data.corpus.documents()[0].sentences[0].tokens[0].norm;
    auto r = f.get("/api/wordtree", {{"q", phrase}, {"variable", f.var(1)}});
    REQUIRE(r.status == 200);
    const auto docs = oracle::site_docs(oracle::phrase_sites(f.data.corpus, {phrase}));
    CHECK(r.body["documents"].size() == docs.size());
    CHECK(r.body["coverage"]["docs"] == docs.size());

    auto grid = f.get("/api/grid", {{"filter", "tree"}});
    CHECK(grid.body["filter"]["active"] == true);
    CHECK(grid.body["filter"]["query"] == phrase);
    CHECK(grid.body["rows"].size() == docs.size());
    CHECK(f.get("/api/grid", {{"filter", "all"}}).body["rows"].size() == 60);

    auto stats = f.get("/api/stats", {{"variable", f.var(1)}, {"filter", "tree"}});
    CHECK(stats.body["filter_size"] == docs.size());
    CHECK(stats.body["histogram"]["true"].get<std::size_t>() + stats.body["histogram"]["false"].get<std::size_t>() +
              stats.body["histogram"]["unknown"].get<std::size_t>() ==
          docs.size());

    CHECK(f.api->handle({"DELETE", "/api/filter", {}, ""}).status == 200);
    CHECK(f.get("/api/grid", {{"filter", "tree"}}).body["rows"].size() == 60);
    CHECK(f.get("/api/wordtree", {{"q", " ;"}}).body["code"] == "EmptyQuery");
    CHECK(f.get("/api/wordtree", {{"q", phrase}, {"drill", "x:y"}}).body["code"] == "InvalidParameter");
}

TEST_CASE("document view") {
    Fixture f;
    auto r = f.get("/api/document/" + f.doc(3), {{"variable", f.var(0)}});
    REQUIRE(r.status == 200);
    CHECK(r.body["text"] == f.data.corpus.documents()[3].text);
    CHECK(r.body["variable"] == f.var(0));
    CHECK(r.body["reports"].size() == f.data.corpus.documents()[3].reports.size());
    for (const auto& k : r.body["keywords"]) CHECK(k["present"].get<bool>() == !k["first_offset"].is_null());
    for (const auto& i : r.body["indicators"]) {
        for (const auto& s : i["spans"]) {
            const std::string text = f.data.corpus.documents()[3].text.substr(s[0], s[1].get<std::size_t>() - s[0].get<std::size_t>());
            CHECK(oracle::words(text) == std::vector<std::string>{i["term"].get<std::string>()});
        }
    }
    CHECK(f.get("/api/document/zz").status == 404);
    CHECK(f.get("/api/document/" + f.doc(3), {{"variable", "zz"}}).body["code"] == "UnknownVariable");
}

TEST_CASE("feedback, conflicts and retrain over the api") {
    Fixture f;
    const std::string d = f.doc(40);
    auto r = f.post("/api/feedback", {{"kind", "document"}, {"doc_id", d}, {"variable", f.var(0)}, {"class", "true"}});
    REQUIRE(r.status == 201);
    const auto first = r.body["item"]["id"].get<std::uint64_t>();
    r = f.post("/api/feedback", {{"kind", "document"}, {"doc_id", d}, {"variable", f.var(0)}, {"class", "false"}});
    CHECK(r.body["conflicts"].size() == 1);
    CHECK(r.body["pending"] == 2);

    r = f.post("/api/retrain", json::object());
    CHECK(r.status == 409);
    CHECK(r.body["code"] == "UnresolvedConflicts");
    CHECK(r.body["conflicts"][0]["kind"] == "contradiction");

    r = f.post("/api/feedback/" + std::to_string(first) + "/resolve", {{"action", "delete"}});
    CHECK(r.status == 200);
    CHECK(r.body["conflicts"].empty());

    const Document& doc = f.data.corpus.documents()[41];
    const Token& tok = doc.sentences[0].tokens[0];
    r = f.post("/api/feedback", {{"kind", "span"},
                                 {"doc_id", doc.doc_id},
                                 {"variable", f.var(1)},
                                 {"class", "false"},
                                 {"report_id", doc.reports[0].id},
                                 {"start", tok.span.start + 1},
                                 {"end", tok.span.start + 2}});
    REQUIRE(r.status == 201);
    CHECK(r.body["item"]["span"]["start"] == tok.span.start);
    CHECK(r.body["item"]["span"]["end"] == tok.span.end);

    r = f.post("/api/feedback", {{"kind", "phrase"}, {"variable", f.var(2)}, {"class", "true"}, {"phrase", tok.norm}});
    REQUIRE(r.status == 201);
    CHECK(r.body["item"]["documents"].size() == oracle::site_docs(oracle::phrase_sites(f.data.corpus, {tok.norm})).size());
    CHECK(f.post("/api/feedback", {{"kind", "neither"}, {"variable", f.var(3)}, {"phrase", tok.norm}}).status == 201);
    CHECK(f.post("/api/feedback", {{"kind", "document"}, {"doc_id", d}, {"variable", f.var(0)}, {"class", "neither"}})
              .body["code"] == "InvalidClass");
    CHECK(f.post("/api/feedback", {{"kind", "document"}, {"variable", f.var(0)}, {"class", "true"}}).body["code"] ==
          "InvalidRequest");
    CHECK(f.api->handle({"POST", "/api/feedback", {}, "{oops"}).body["code"] == "InvalidRequest");

    const auto before = f.engine->snapshot();
    r = f.post("/api/retrain", json::object());
    REQUIRE(r.status == 200);
    CHECK(r.body["round"] == 1);
    CHECK(r.body["pending"] == 0);
    std::set<std::tuple<std::string, std::string, Class, Class>> got;
    for (const auto& c : r.body["diff"]["changes"])
        got.insert({c["doc_id"], c["variable"], parse_class(c["old_class"].get<std::string>()),
                    parse_class(c["new_class"].get<std::string>())});
    CHECK(got == oracle::table_diff(f.data.corpus, before->models.predictions, f.engine->snapshot()->models.predictions));

    auto grid = f.get("/api/grid");
    std::size_t changed = 0;
    for (const auto& row : grid.body["rows"])
        for (const auto& cell : row["cells"]) changed += cell["changed"].get<bool>();
    CHECK(changed == got.size());

    CHECK(f.get("/api/feedback").body["items"].size() == 5);
}

TEST_CASE("visits and next document") {
    Fixture f;
    CHECK(f.get("/api/next", {{"variable", f.var(0)}}).body["doc_id"] == f.doc(0));
    CHECK(f.post("/api/visit", {{"doc_id", f.doc(0)}, {"variable", f.var(0)}}).status == 200);
    CHECK(f.get("/api/next", {{"variable", f.var(0)}}).body["doc_id"] == f.doc(1));
    const auto session = f.get("/api/session").body;
    CHECK(session["active"]["doc_id"] == f.doc(0));
    CHECK(session["visited"].size() == 1);
    for (std::size_t d = 0; d < 60; ++d) f.post("/api/visit", {{"doc_id", f.doc(d)}, {"variable", f.var(0)}});
    const auto r = f.get("/api/next", {{"variable", f.var(0)}});
    CHECK(r.status == 404);
    CHECK(r.body["code"] == "AllVisited");
    CHECK(f.get("/api/next", {{"variable", f.var(1)}}).status == 200);
    CHECK(f.post("/api/visit", {{"doc_id", "zz"}, {"variable", f.var(0)}}).body["code"] == "UnknownDocument");
}

TEST_CASE("unknown routes and health") {
    Fixture f;
    CHECK(f.get("/api/health").body["documents"] == 60);
    CHECK(f.get("/api/nope").status == 404);
    CHECK(f.api->handle({"PUT", "/api/grid", {}, ""}).status == 404);
    CHECK(f.post("/api/feedback/x/resolve", {{"action", "delete"}}).body["code"] == "InvalidParameter");
    CHECK(f.post("/api/feedback/99/resolve", {{"action", "delete"}}).body["code"] == "UnknownFeedback");
}

TEST_CASE("http round trip") {
    const fs::path dir = fs::temp_directory_path() / "emr_service_http";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto data = fixture::synthetic(30, 2, 3);
    std::vector<Label> seed;
    for (const auto& l : data.gold)
        if (*data.corpus.index_of(l.doc_id) < 10) seed.push_back(l);
    std::ofstream(dir / "corpus.json") << corpus_to_json(data.corpus);
    save_labels(dir / "seed.json", seed);

    ServiceConfig cfg;
    cfg.corpus = dir / "corpus.json";
    cfg.seed_labels = dir / "seed.json";
    cfg.data_dir = dir / "data";
    cfg.port = 0;
    {
        Service svc(cfg);
        const int port = svc.start();
        CHECK(svc.running());
        httplib::Client cli("127.0.0.1", port);
        auto res = cli.Get("/api/health");
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(json::parse(res->body)["documents"] == 30);

        const std::string body = json{{"kind", "document"},
                                      {"doc_id", data.corpus.documents()[20].doc_id},
                                      {"variable", data.corpus.variables()[0]},
                                      {"class", "true"}}
                                     .dump();
        res = cli.Post("/api/feedback", body, "application/json");
        REQUIRE(res);
        CHECK(res->status == 201);
        res = cli.Post("/api/retrain", "{}", "application/json");
        REQUIRE(res);
        CHECK(json::parse(res->body)["round"] == 1);
        res = cli.Get("/api/grid?variable_sort=" + data.corpus.variables()[1] + ":desc&filter=all");
        REQUIRE(res);
        CHECK(json::parse(res->body)["sort"]["order"] == "desc");
        res = cli.Get("/");
        REQUIRE(res);
        CHECK(res->status == 200);
        svc.stop();
        CHECK_FALSE(svc.running());
    }
    {
        Service again(cfg);
        CHECK(again.engine().snapshot()->round == 1);
        CHECK(again.engine().ledger_items().size() == 1);
    }
    std::ofstream(dir / "empty.json") << R"({"variables":["v"],"records":[]})";
    cfg.corpus = dir / "empty.json";
    CHECK_THROWS_AS(Service{cfg}, Error);
    fs::remove_all(dir);
}
