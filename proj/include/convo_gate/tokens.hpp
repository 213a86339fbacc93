#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convo_gate/core.hpp"
#include "convo_gate/error.hpp"

namespace convo_gate {

inline bool is_ascii_space(unsigned char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }

/// Number of maximal non-whitespace runs.
inline std::size_t count_whitespace_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (is_ascii_space(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_ascii_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

/// BERT-style WordPiece tokenizer over a one-token-per-line vocabulary.
/// Lowercases ASCII, splits on whitespace and punctuation, keeps special
/// tokens such as "[SEP]" intact when they appear in the text.
class WordPieceTokenizer {
public:
    struct Options {
        bool do_lower_case = true;
        std::string unk_token = "[UNK]";
        std::string cls_token = "[CLS]";
        std::string sep_token = "[SEP]";
        std::string pad_token = "[PAD]";
        std::string continuation_prefix = "##";
        std::size_t max_chars_per_word = 100;
    };

    struct Encoding {
        std::vector<std::int64_t> input_ids;
        std::vector<std::int64_t> attention_mask;
    };

    WordPieceTokenizer(std::vector<std::string> vocab, Options options)
        : vocab_(std::move(vocab)), options_(std::move(options)) {
        for (std::size_t i = 0; i < vocab_.size(); ++i) {
            ids_.emplace(vocab_[i], static_cast<std::int64_t>(i));
        }
        for (const auto* tok : {&options_.unk_token, &options_.cls_token, &options_.sep_token,
                                &options_.pad_token}) {
            if (!ids_.contains(*tok)) {
                throw Error(ErrorKind::Parse, "vocabulary lacks special token " + *tok);
            }
        }
    }

    static WordPieceTokenizer from_file(const std::string& path, Options options) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Io, "cannot open tokenizer vocabulary " + path);
        std::vector<std::string> vocab;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            vocab.push_back(line);
        }
        return WordPieceTokenizer(std::move(vocab), std::move(options));
    }

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const Options& options() const noexcept { return options_; }
    std::int64_t id_of(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? ids_.at(options_.unk_token) : it->second;
    }

    /// Wordpiece tokens without [CLS]/[SEP] framing.
    std::vector<std::string> tokenize(std::string_view text) const {
        std::vector<std::string> out;
        for (const auto& word : basic_split(text)) {
            if (is_special(word)) {
                out.push_back(word);
                continue;
            }
            wordpiece(word, out);
        }
        return out;
    }

    /// [CLS] tokens [SEP], truncated at the tail to max_length.
    Encoding encode(std::string_view text, std::size_t max_length) const {
        auto tokens = tokenize(text);
        const std::size_t room = max_length >= 2 ? max_length - 2 : 0;
        if (tokens.size() > room) tokens.resize(room);
        Encoding enc;
        enc.input_ids.push_back(id_of(options_.cls_token));
        for (const auto& tok : tokens) enc.input_ids.push_back(id_of(tok));
        enc.input_ids.push_back(id_of(options_.sep_token));
        enc.attention_mask.assign(enc.input_ids.size(), 1);
        return enc;
    }

private:
    bool is_special(const std::string& word) const {
        return word == options_.sep_token || word == options_.cls_token || word == options_.pad_token ||
               word == options_.unk_token;
    }

    static bool is_punct(unsigned char c) {
        return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
    }

    std::vector<std::string> basic_split(std::string_view text) const {
        std::vector<std::string> words;
        for (auto chunk : split_whitespace(text)) {
            std::string current;
            std::size_t i = 0;
            while (i < chunk.size()) {
                bool matched_special = false;
                for (const auto* tok : {&options_.sep_token, &options_.cls_token}) {
                    if (chunk.substr(i, tok->size()) == *tok) {
                        if (!current.empty()) words.push_back(std::move(current));
                        current.clear();
                        words.push_back(*tok);
                        i += tok->size();
                        matched_special = true;
                        break;
                    }
                }
                if (matched_special) continue;
                const auto c = static_cast<unsigned char>(chunk[i]);
                if (is_punct(c)) {
                    if (!current.empty()) words.push_back(std::move(current));
                    current.clear();
                    words.emplace_back(1, static_cast<char>(c));
                } else {
                    current += (options_.do_lower_case && c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32)
                                                                                 : static_cast<char>(c);
                }
                ++i;
            }
            if (!current.empty()) words.push_back(std::move(current));
        }
        return words;
    }

    void wordpiece(const std::string& word, std::vector<std::string>& out) const {
        if (word.size() > options_.max_chars_per_word) {
            out.push_back(options_.unk_token);
            return;
        }
        std::vector<std::string> pieces;
        std::size_t start = 0;
        while (start < word.size()) {
            std::size_t end = word.size();
            std::string found;
            while (start < end) {
                std::string candidate = word.substr(start, end - start);
                if (start > 0) candidate = options_.continuation_prefix + candidate;
                if (ids_.contains(candidate)) {
                    found = std::move(candidate);
                    break;
                }
                --end;
            }
            if (found.empty()) {
                out.push_back(options_.unk_token);
                return;
            }
            pieces.push_back(std::move(found));
            start = end;
        }
        out.insert(out.end(), pieces.begin(), pieces.end());
    }

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::int64_t> ids_;
    Options options_;
};

enum class CounterKind { Whitespace, ExternalTokenizer };

inline CounterKind parse_counter_kind(std::string_view name) {
    if (name == "whitespace") return CounterKind::Whitespace;
    if (name == "external" || name == "external-tokenizer") return CounterKind::ExternalTokenizer;
    throw Error(ErrorKind::InvalidArgument, "unknown token counter '" + std::string(name) + "'");
}

/// Token counter used for both context budgets and reduction accounting.
class TokenCounter {
public:
    TokenCounter() = default;

    static TokenCounter whitespace() { return TokenCounter(); }

    static TokenCounter external(std::shared_ptr<const WordPieceTokenizer> tokenizer) {
        if (!tokenizer) throw Error(ErrorKind::Backend, "external tokenizer unavailable");
        TokenCounter c;
        c.kind_ = CounterKind::ExternalTokenizer;
        c.tokenizer_ = std::move(tokenizer);
        return c;
    }

    CounterKind kind() const noexcept { return kind_; }

    std::size_t count(std::string_view text) const {
        if (kind_ == CounterKind::Whitespace) return count_whitespace_tokens(text);
        return tokenizer_->tokenize(text).size();
    }
    std::size_t operator()(std::string_view text) const { return count(text); }

    /// Keeps leading whitespace-delimited words while the count fits `budget`.
    std::string truncate(std::string_view text, std::size_t budget) const {
        std::string out;
        const auto words = split_whitespace(text);
        if (kind_ == CounterKind::Whitespace) {
            for (std::size_t i = 0; i < words.size() && i < budget; ++i) {
                if (i) out += ' ';
                out += words[i];
            }
            return out;
        }
        for (auto word : words) {
            std::string candidate = out.empty() ? std::string(word) : out + " " + std::string(word);
            if (count(candidate) > budget) break;
            out = std::move(candidate);
        }
        return out;
    }

private:
    CounterKind kind_ = CounterKind::Whitespace;
    std::shared_ptr<const WordPieceTokenizer> tokenizer_;
};

/// Tokens a conversation costs when sent downstream: the sum over turn texts.
inline std::size_t conversation_tokens(const Conversation& conv, const TokenCounter& counter) {
    std::size_t total = 0;
    for (const auto& turn : conv.turns) total += counter.count(turn.text);
    return total;
}

}  // namespace convo_gate
