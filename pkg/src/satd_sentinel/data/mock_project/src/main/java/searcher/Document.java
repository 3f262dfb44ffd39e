package searcher;

import java.util.List;

/* Immutable document with its token list cached. */
public final class Document {
    private final int id;
    private final String text;
    private final List<String> tokens;

    public Document(int id, String text, Tokenizer tokenizer) {
        this.id = id;
        this.text = text;
        // TODO: Keep the raw text in memory until #4 is resolved, then load it lazily from disk
        this.tokens = tokenizer.tokenize(text);
    }

    public int id() {
        return id;
    }

    public String text() {
        return text;
    }

    public List<String> tokens() {
        return tokens;
    }
}
