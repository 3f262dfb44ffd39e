package searcher;

import java.util.ArrayList;
import java.util.HashSet;
import java.util.List;
import java.util.Set;

public class JaccardSearcher implements Searcher {
    private final Index index;

    public JaccardSearcher(Index index) {
        this.index = index;
    }

    // Jaccard similarity: |A ∩ B| / |A ∪ B| over token sets.
    static double jaccard(Set<String> a, Set<String> b) {
        Set<String> inter = new HashSet<>(a);
        inter.retainAll(b);
        Set<String> union = new HashSet<>(a);
        union.addAll(b);
        return union.isEmpty() ? 0.0 : (double) inter.size() / union.size();
    }

    @Override
    public List<SearchResult> search(String query, int k) {
        Set<String> q = new HashSet<>(new Tokenizer().tokenize(query));
        List<SearchResult> results = new ArrayList<>();
        for (int id = 0; id < index.size(); id++) {
            Set<String> d = new HashSet<>(index.document(id).tokens());
            results.add(new SearchResult(id, jaccard(q, d)));
        }
        // TODO: Stemmed tokens would match more pairs. Revisit this ranking once issue #2 is resolved
        results.sort((a, b) -> Double.compare(b.score, a.score));
        return results.subList(0, Math.min(k, results.size()));
    }
}
