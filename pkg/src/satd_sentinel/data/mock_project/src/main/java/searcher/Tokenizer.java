package searcher;

import java.util.ArrayList;
import java.util.List;
import java.util.Locale;

public class Tokenizer {
    private static final String SEPARATORS = "[^a-z0-9]+"; // not a comment: "// /* */"

    public List<String> tokenize(String text) {
        List<String> out = new ArrayList<>();
        // Lower-case first so "Search" and "search" share a posting list.
        String lowered = text.toLowerCase(Locale.ROOT);
        // TODO: Only ASCII letters are kept for now. Switch to Unicode classes once issue #1 is fixed
        for (String token : lowered.split(SEPARATORS)) {
            if (token.isEmpty()) {
                continue;
            }
            // FIXME: Skip stemming until #2 is resolved; re-enable the Porter stemmer after that
            out.add(token);
        }
        return out;
    }

    /*
     * Stop words are not removed: both searchers weight
     * frequent terms down on their own.
     */
    public boolean isStopWord(String token) {
        return false;
    }
}
