package searcher;

import java.util.List;

/**
 * A ranked keyword search over an in-memory document collection.
 */
public interface Searcher {
    /** Returns the ids of the top {@code k} documents for the query. */
    List<SearchResult> search(String query, int k);

    final class SearchResult {
        public final int docId;
        public final double score;

        public SearchResult(int docId, double score) {
            this.docId = docId;
            this.score = score;
        }

        @Override
        public String toString() {
            // e.g. "doc 3 (0.4210)"
            return "doc " + docId + " (" + String.format("%.4f", score) + ")";
        }
    }
}
