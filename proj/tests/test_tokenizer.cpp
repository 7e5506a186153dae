#include <doctest.h>

#include <fstream>

#include "webrep/common.hpp"
#include "webrep/rng.hpp"
#include "webrep/tokenizer.hpp"

using namespace webrep;

namespace {

Vocab tiny_vocab() {
    std::vector<WebpageContent> corpus = {
        {"http://news.example.com/world", "world news daily", "breaking news from around the world"},
        {"http://sports.example.com/games", "sports games", "latest sports scores and games news"},
    };
    return Vocab::build(corpus, 1);
}

WebpageContent long_desc_content(int desc_tokens) {
    WebpageContent c;
    c.url = "http://news.example.com/world";
    c.title = "world news daily";
    std::string d;
    for (int i = 0; i < desc_tokens; ++i) d += "news ";
    c.description = d;
    return c;
}

}  // namespace

TEST_CASE("vocab: singleton tokens below min_freq leave only reserved ids") {
    std::vector<WebpageContent> corpus = {{"http://aa.bb/cc", "dd ee", "ff gg hh"}};
    Vocab v = Vocab::build(corpus, 2);
    CHECK(v.size() == kFirstCorpusId);
    CHECK(v.lookup("aa") == kUnkId);
}

TEST_CASE("vocab: deterministic build and frequency-then-lex id order") {
    std::vector<WebpageContent> corpus = {
        {"http://x.y/news", "news today", "news about stuff"},
        {"http://x.y/other", "more news", "stuff happens"},
        {"http://x.y/third", "stuff", "today again"},
    };
    Vocab a = Vocab::build(corpus, 2);
    Vocab b = Vocab::build(corpus, 2);
    const std::string path_a = "/tmp/webrep_vocab_a.tsv";
    const std::string path_b = "/tmp/webrep_vocab_b.tsv";
    a.save(path_a);
    b.save(path_b);
    std::ifstream fa(path_a), fb(path_b);
    std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(ca == cb);

    // "news" has frequency 4 (max), so it takes the first unreserved id.
    CHECK(a.frequency("news") == 4);
    CHECK(a.lookup("news") == kFirstCorpusId);
    // freq-3 tokens follow, tie-broken lexicographically: http, stuff, x, y.
    CHECK(a.lookup("http") == kFirstCorpusId + 1);
    CHECK(a.lookup("stuff") == kFirstCorpusId + 2);
    CHECK(a.frequency("today") == 2);
    CHECK(a.frequency("x") == 3);
}

TEST_CASE("vocab rejects an empty corpus and round-trips through TSV") {
    CHECK_THROWS_AS(Vocab::build({}, 1), ValidationError);
    Vocab v = tiny_vocab();
    const std::string path = "/tmp/webrep_vocab_rt.tsv";
    v.save(path);
    Vocab loaded = Vocab::load(path);
    CHECK(loaded.size() == v.size());
    CHECK(loaded.lookup("news") == v.lookup("news"));
    CHECK(loaded.frequency("news") == v.frequency("news"));

    std::ofstream bad(path, std::ios::trunc);
    bad << "not a vocab\n";
    bad.close();
    CHECK_THROWS_AS(Vocab::load(path), FormatError);
}

TEST_CASE("url splitting drops the listed delimiters") {
    auto toks = split_url("http://News.Example.com/World?q=a&b=c-d_e");
    std::vector<std::string> expect = {"http", "news", "example", "com", "world", "q", "a", "b", "c", "d", "e"};
    CHECK(toks == expect);
}

TEST_CASE("text splitting lowercases and breaks on punctuation") {
    auto toks = split_text("Hello, World! 123 foo-bar");
    std::vector<std::string> expect = {"hello", "world", "123", "foo", "bar"};
    CHECK(toks == expect);
}

TEST_CASE("tokenize: short content keeps every token with no truncation") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "world news", "breaking news"};
    auto seq = tokenize(c, v);
    // [CLS] url(4) FS title(2) FS desc(2) [SEP] = 12... url tokens: http news example com world = 5
    CHECK(seq.ids.front() == kClsId);
    CHECK(seq.ids.back() == kSepId);
    CHECK(seq.length() == 1 + 5 + 1 + 2 + 1 + 2 + 1);
    CHECK(seq.attention_length == seq.length());
    CHECK(seq.segments.front() == Segment::Special);
    CHECK(seq.segments[1] == Segment::Url);
}

TEST_CASE("tokenize: oversized description truncates to exactly 160 with url+title intact") {
    Vocab v = tiny_vocab();
    auto seq = tokenize(long_desc_content(500), v);
    CHECK(seq.length() == 160);
    CHECK(seq.ids.front() == kClsId);
    CHECK(seq.ids.back() == kSepId);
    int url_count = 0, title_count = 0;
    for (auto s : seq.segments) {
        if (s == Segment::Url) ++url_count;
        if (s == Segment::Title) ++title_count;
    }
    CHECK(url_count == 5);   // http news example com world
    CHECK(title_count == 3); // world news daily
}

TEST_CASE("tokenize: empty title and description keep both field separators") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "", ""};
    auto seq = tokenize(c, v);
    REQUIRE(seq.length() == 1 + 5 + 2 + 1);
    CHECK(seq.ids[0] == kClsId);
    CHECK(seq.ids[6] == kFieldSepId);
    CHECK(seq.ids[7] == kFieldSepId);
    CHECK(seq.ids[8] == kSepId);
}

TEST_CASE("tokenize: url+title overflow truncates the title tail, never the url") {
    Vocab v = tiny_vocab();
    WebpageContent c;
    c.url = "http://news.example.com/world";  // 5 tokens
    std::string t;
    for (int i = 0; i < 200; ++i) t += "world ";
    c.title = t;
    c.description = "breaking news";
    auto seq = tokenize(c, v);
    CHECK(seq.length() == 160);
    int url_count = 0, title_count = 0, desc_count = 0;
    for (auto s : seq.segments) {
        if (s == Segment::Url) ++url_count;
        if (s == Segment::Title) ++title_count;
        if (s == Segment::Desc) ++desc_count;
    }
    CHECK(url_count == 5);
    CHECK(desc_count == 0);
    CHECK(title_count == 160 - 2 - 2 - 5);
}

TEST_CASE("tokenize: url alone above the reserve is a content-too-long error") {
    Vocab v = tiny_vocab();
    WebpageContent c;
    c.url = "http:";
    for (int i = 0; i < 159; ++i) c.url += "/x";  // http + 159 tokens = 160 url tokens
    CHECK_THROWS_AS(tokenize(c, v), ContentTooLongError);

    // 158 url tokens exactly fit beside CLS and SEP (field separators yield)
    WebpageContent ok;
    ok.url = "a";
    for (int i = 0; i < 157; ++i) ok.url += "/a";
    auto seq = tokenize(ok, v);
    CHECK(seq.length() == 160);
    CHECK(seq.ids.front() == kClsId);
    CHECK(seq.ids.back() == kSepId);
}

TEST_CASE("tokenize: unknown tokens map to UNK") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://unseen.domain.zz/path", "unknown words here", "also unknown"};
    auto seq = tokenize(c, v);
    int unks = 0;
    for (auto id : seq.ids)
        if (id == kUnkId) ++unks;
    CHECK(unks > 3);
}

TEST_CASE("detokenize_debug renders segments, unk markers, and validates ids") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "world zzzunseen", "breaking news"};
    auto seq = tokenize(c, v);
    auto text = detokenize_debug(seq, v);
    CHECK(text.find("<cls>") != std::string::npos);
    CHECK(text.find("[url]") != std::string::npos);
    CHECK(text.find("[title]") != std::string::npos);
    CHECK(text.find("<unk>") != std::string::npos);
    CHECK(text.find("news") != std::string::npos);

    TokenSequence bad = seq;
    bad.ids[2] = v.size() + 7;
    CHECK_THROWS_AS(detokenize_debug(bad, v), ValidationError);

    // truncated sequence renders and ends inside the description segment
    auto long_seq = tokenize(long_desc_content(500), v);
    auto rendered = detokenize_debug(long_seq, v);
    CHECK(long_seq.segments[long_seq.length() - 2] == Segment::Desc);
    CHECK(rendered.find("[desc]") != std::string::npos);
}

TEST_CASE("tokenize round-trip on clean lowercase in-vocab content") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "world news", "breaking news"};
    auto seq = tokenize(c, v);
    auto text = detokenize_debug(seq, v);
    for (const char* tok : {"world", "news", "breaking"}) CHECK(text.find(tok) != std::string::npos);
}

TEST_CASE("property: 10k random contents always fit in 160 and truncate only the description") {
    Vocab v = tiny_vocab();
    Rng rng(2024);
    const std::vector<std::string> words = {"news", "world", "sports", "zz", "breaking", "games",
                                            "the",  "daily", "a",      "qq", "example"};
    auto random_words = [&](int n) {
        std::string s;
        for (int i = 0; i < n; ++i) {
            s += words[rng.uniform_index(words.size())];
            s += ' ';
        }
        return s;
    };
    for (int iter = 0; iter < 10000; ++iter) {
        WebpageContent c;
        int url_tokens = 1 + static_cast<int>(rng.uniform_index(12));
        c.url = "http://a.b";
        for (int i = 0; i < url_tokens; ++i) c.url += "/" + words[rng.uniform_index(words.size())];
        c.title = random_words(static_cast<int>(rng.uniform_index(30)));
        c.description = random_words(static_cast<int>(rng.uniform_index(300)));

        auto seq = tokenize(c, v);
        CHECK(seq.length() <= 160);
        CHECK(seq.ids.front() == kClsId);
        CHECK(seq.ids.back() == kSepId);

        // whenever url+title fit, only description tokens may be dropped
        auto url_toks = split_url(c.url);
        auto title_toks = split_text(c.title);
        if (static_cast<int>(url_toks.size() + title_toks.size()) + 4 <= 160) {
            int url_count = 0, title_count = 0;
            for (auto s : seq.segments) {
                if (s == Segment::Url) ++url_count;
                if (s == Segment::Title) ++title_count;
            }
            CHECK(url_count == static_cast<int>(url_toks.size()));
            CHECK(title_count == static_cast<int>(title_toks.size()));
        }

        // segment marks partition the sequence and agree with reserved positions
        for (int i = 0; i < seq.length(); ++i) {
            bool reserved = seq.ids[i] < kFirstCorpusId;
            bool special = seq.segments[i] == Segment::Special;
            if (reserved && seq.ids[i] != kUnkId) CHECK(special);
            if (special) CHECK((seq.ids[i] < kFirstCorpusId));
        }
    }
}

TEST_CASE("property: extending the description never changes the url/title prefix") {
    Vocab v = tiny_vocab();
    Rng rng(77);
    for (int iter = 0; iter < 200; ++iter) {
        WebpageContent c;
        c.url = "http://news.example.com/world";
        c.title = "world news daily";
        std::string d;
        int base = static_cast<int>(rng.uniform_index(200));
        for (int i = 0; i < base; ++i) d += "news ";
        c.description = d;
        auto seq1 = tokenize(c, v);
        c.description += " breaking games sports";
        auto seq2 = tokenize(c, v);
        int prefix = std::min({seq1.length() - 1, seq2.length() - 1, 160});
        for (int i = 0; i < prefix; ++i) {
            if (seq1.segments[i] == Segment::Desc || seq2.segments[i] == Segment::Desc) break;
            CHECK(seq1.ids[i] == seq2.ids[i]);
        }
    }
}

TEST_CASE("tokenize is a pure function of content and vocab") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "world news", "breaking news stories"};
    auto a = tokenize(c, v);
    auto b = tokenize(c, v);
    CHECK(a.ids == b.ids);
    CHECK(a.segments == b.segments);
}

TEST_CASE("pad_to appends PAD with Special marks and attention length is preserved") {
    Vocab v = tiny_vocab();
    WebpageContent c = {"http://news.example.com/world", "world", "news"};
    auto seq = tokenize(c, v);
    int orig = seq.length();
    seq.pad_to(32);
    CHECK(seq.length() == 32);
    CHECK(seq.attention_length == orig);
    for (int i = orig; i < 32; ++i) {
        CHECK(seq.ids[i] == kPadId);
        CHECK(seq.segments[i] == Segment::Special);
    }
    CHECK_THROWS_AS(seq.pad_to(8), ValidationError);
}

TEST_CASE("tokenize rejects an empty url") {
    Vocab v = tiny_vocab();
    CHECK_THROWS_AS(tokenize({"", "t", "d"}, v), ValidationError);
}
