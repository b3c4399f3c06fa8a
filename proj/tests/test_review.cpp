#include <httplib.h>

#include <gtest/gtest.h>

#include "coneboot/png_io.hpp"
#include "coneboot/review.hpp"
#include "coneboot/review_server.hpp"
#include "support.hpp"

using namespace coneboot;
using namespace coneboot::review;
using coneboot::testing::TempDir;

namespace {

DatasetManifest manifest_of(std::size_t n) {
    DatasetManifest m;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "seq%02zu", i);
        m.entries.push_back({id, id, 12, Split::unsorted});
    }
    return m;
}

Verdict verdict(const std::string& id, Decision d, std::int64_t ts = 1) { return {id, d, ts, 0, "t"}; }

ErrorCode error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return ErrorCode::invalid_argument;
}

} // namespace

TEST(Queue, EmptyLogLeavesEverythingPending) {
    const auto b = build_queue(manifest_of(5), {});
    EXPECT_EQ(b.queue.pending.size(), 5u);
    EXPECT_TRUE(b.queue.done.empty());
    EXPECT_EQ(b.queue.pending.front(), "seq00");
}

TEST(Queue, FullLogLeavesNothingPending) {
    std::vector<Verdict> log;
    for (int i = 0; i < 5; ++i) log.push_back(verdict("seq0" + std::to_string(i), Decision::good));
    EXPECT_TRUE(build_queue(manifest_of(5), log).queue.pending.empty());
}

TEST(Queue, LastVerdictWins) {
    const std::vector<Verdict> log{verdict("seq01", Decision::good, 1), verdict("seq01", Decision::bad, 2)};
    const auto b = build_queue(manifest_of(3), log);
    EXPECT_EQ(b.queue.done.at("seq01").decision, Decision::bad);
    EXPECT_EQ(b.queue.pending.size(), 2u);
}

TEST(Queue, UnknownIdsAreReported) {
    const std::vector<Verdict> log{verdict("ghost", Decision::good)};
    const auto b = build_queue(manifest_of(2), log);
    EXPECT_EQ(b.skipped_unknown, std::vector<std::string>{"ghost"});
    EXPECT_EQ(b.queue.pending.size(), 2u);
}

TEST(Queue, TestSetsAreNotReviewed) {
    auto m = manifest_of(3);
    m.entries[1].split = Split::representative_test;
    EXPECT_EQ(build_queue(m, {}).queue.pending.size(), 2u);
}

TEST(RecordVerdict, AppendsAndMoves) {
    auto q = build_queue(manifest_of(3), {}).queue;
    VerdictLog log;
    record_verdict(q, verdict("seq00", Decision::good, 10), log);
    record_verdict(q, verdict("seq00", Decision::bad, 5), log);
    EXPECT_EQ(log.entries().size(), 2u);
    EXPECT_EQ(log.entries()[1].timestamp_ms, 10); // clamped to stay nondecreasing
    EXPECT_EQ(q.done.at("seq00").decision, Decision::bad);
    EXPECT_EQ(q.pending.size(), 2u);
}

TEST(RecordVerdict, UnknownIdRejected) {
    auto q = build_queue(manifest_of(2), {}).queue;
    VerdictLog log;
    EXPECT_EQ(error_code_of([&] { record_verdict(q, verdict("nope", Decision::good), log); }), ErrorCode::unknown_id);
    EXPECT_TRUE(log.entries().empty());
}

TEST(VerdictLogFile, SurvivesReopen) {
    TempDir dir;
    {
        VerdictLog log(dir / "v.log");
        log.append(verdict("a", Decision::good, 1));
        log.append(verdict("b", Decision::bad, 2));
    }
    const auto back = VerdictLog::read(dir / "v.log");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1], verdict("b", Decision::bad, 2));
}

TEST(Partition, FourOfTen) {
    auto m = manifest_of(10);
    std::vector<Verdict> log;
    for (int i = 0; i < 10; ++i) log.push_back(verdict("seq0" + std::to_string(i), i < 4 ? Decision::good : Decision::bad));
    const auto r = partition(m, build_queue(m, log).queue);
    EXPECT_EQ(r.train_good.size(), 4u);
    EXPECT_DOUBLE_EQ(r.good_fraction(), 0.4);
    EXPECT_EQ(m.ids_in(Split::rejected).size(), 6u);
}

TEST(Partition, PendingQueueRefused) {
    auto m = manifest_of(3);
    const auto q = build_queue(m, {verdict("seq00", Decision::good)}).queue;
    EXPECT_EQ(error_code_of([&] { partition(m, q); }), ErrorCode::unresolved_queue);
    EXPECT_EQ(partition(m, q, true).train_good.size(), 1u);
}

TEST(Sampling, WholePoolAndErrors) {
    std::vector<std::string> pool;
    for (int i = 0; i < 33; ++i) pool.push_back(std::to_string(i));
    EXPECT_EQ(sample_ids(pool, 33, 1).size(), 33u);
    std::vector<std::string> small(pool.begin(), pool.begin() + 10);
    EXPECT_EQ(error_code_of([&] { sample_ids(small, 33, 1); }), ErrorCode::pool_too_small);
    EXPECT_EQ(sample_ids(pool, 12, 9), sample_ids(pool, 12, 9));
    EXPECT_NE(sample_ids(pool, 12, 9), sample_ids(pool, 12, 10));
}

TEST(Sampling, TestSetsAreDisjointAndLogged) {
    auto m = manifest_of(40);
    const auto rep = sample_representative(m, 10, 3);
    const auto b = build_queue(m, {});
    std::vector<Verdict> log;
    for (std::size_t i = 0; i < b.queue.pending.size(); ++i) {
        log.push_back(verdict(b.queue.pending[i], i % 2 ? Decision::bad : Decision::good));
    }
    partition(m, build_queue(m, log).queue);
    const auto bad = sample_bad_mask(m, 6, 4);
    for (const auto& id : bad) EXPECT_EQ(std::count(rep.begin(), rep.end(), id), 0);
    EXPECT_EQ(m.seed_log.size(), 2u);
    EXPECT_EQ(m.seed_log[0].purpose, "representative_test");
}

TEST(SimulatedReviewer, Judgement) {
    BinaryMask truth(10, 10);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 5; ++x) truth.set(x, y, true);
    }
    const SimulatedReviewer r;
    EXPECT_EQ(r.judge(truth, truth), Decision::good);
    EXPECT_EQ(r.judge(BinaryMask(10, 10), truth), Decision::bad);
    EXPECT_EQ(r.judge(BinaryMask(10, 10, true), truth), Decision::bad);
}

class ReviewHttp : public ::testing::Test {
protected:
    void SetUp() override {
        for (int s = 0; s < 3; ++s) {
            const std::string id = "seq0" + std::to_string(s);
            fs::create_directories(dir_ / id);
            for (int f = 0; f < 4; ++f) {
                png::write_frame(dir_ / id / ("frame_" + std::to_string(f) + ".png"), Frame(8, 8, 10.0 * f));
            }
            png::write_mask(dir_ / id / "mask_hull.png", BinaryMask(8, 8, true));
            manifest_.entries.push_back({id, id, 4, Split::unsorted});
        }
    }

    std::unique_ptr<ReviewServer> serve() {
        ServerConfig cfg;
        cfg.dataset_root = dir_.path();
        auto server = std::make_unique<ReviewServer>(cfg, manifest_);
        port_ = server->start();
        return server;
    }

    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

    static httplib::Result post(httplib::Client& c, const nlohmann::json& body) {
        return c.Post("/api/verdicts", body.dump(), "application/json");
    }

    TempDir dir_;
    DatasetManifest manifest_;
    int port_ = 0;
};

TEST_F(ReviewHttp, QueueListsPendingWithUrls) {
    auto server = serve();
    auto c = client();
    const auto res = c.Get("/api/queue");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto items = nlohmann::json::parse(res->body);
    ASSERT_EQ(items.size(), 3u);
    EXPECT_EQ(items[0]["sequence_id"], "seq00");
    EXPECT_EQ(items[0]["frame_url"], "/api/image/seq00/frame/2");
    EXPECT_EQ(nlohmann::json::parse(c.Get("/api/queue?limit=1")->body).size(), 1u);
    EXPECT_EQ(c.Get("/api/queue?limit=x")->status, 400);
}

TEST_F(ReviewHttp, ServesFramesAndMasks) {
    auto server = serve();
    auto c = client();
    const auto frame = c.Get("/api/image/seq01/frame/3");
    ASSERT_TRUE(frame);
    EXPECT_EQ(frame->status, 200);
    EXPECT_EQ(frame->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(frame->body.substr(1, 3), "PNG");
    EXPECT_EQ(c.Get("/api/image/seq01/mask")->status, 200);
    EXPECT_EQ(c.Get("/api/image/seq01/frame/9")->status, 404);
    EXPECT_EQ(c.Get("/api/image/nope/mask")->status, 404);
}

TEST_F(ReviewHttp, VerdictStatusCodes) {
    auto server = serve();
    auto c = client();
    EXPECT_EQ(post(c, {{"sequence_id", "seq00"}, {"decision", "good"}})->status, 204);
    EXPECT_EQ(post(c, {{"sequence_id", "seq00"}, {"decision", "maybe"}})->status, 400);
    EXPECT_EQ(c.Post("/api/verdicts", "{oops", "application/json")->status, 400);
    EXPECT_EQ(post(c, {{"sequence_id", "ghost"}, {"decision", "bad"}})->status, 404);
    const auto progress = nlohmann::json::parse(c.Get("/api/progress")->body);
    EXPECT_EQ(progress["total"], 3);
    EXPECT_EQ(progress["done"], 1);
    EXPECT_EQ(progress["good"], 1);
    EXPECT_EQ(progress["bad"], 0);
}

TEST_F(ReviewHttp, VerdictsAreDurableAndReplayed) {
    {
        auto server = serve();
        auto c = client();
        ASSERT_EQ(post(c, {{"sequence_id", "seq01"}, {"decision", "bad"}, {"elapsed_ms", 1500}})->status, 204);
        // Durable before the response: the log already holds the line.
        const auto lines = VerdictLog::read(dir_ / verdict_log_name);
        ASSERT_EQ(lines.size(), 1u);
        EXPECT_EQ(lines[0].elapsed_ms, 1500);
        server->stop();
    }
    auto server = serve();
    auto c = client();
    const auto items = nlohmann::json::parse(c.Get("/api/queue")->body);
    ASSERT_EQ(items.size(), 2u);
    EXPECT_EQ(items[0]["sequence_id"], "seq00");
    EXPECT_EQ(items[1]["sequence_id"], "seq02");
    EXPECT_EQ(server->snapshot().done.at("seq01").decision, Decision::bad);
}
