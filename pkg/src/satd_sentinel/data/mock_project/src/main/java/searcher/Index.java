package searcher;

import java.util.ArrayList;
import java.util.HashMap;
import java.util.List;
import java.util.Map;

/** Inverted index: term -> ids of documents containing it. */
public class Index {
    private final Map<String, List<Integer>> postings = new HashMap<>();
    private final List<Document> documents = new ArrayList<>();

    // HACK: Synchronize the whole method until issue #4 is fixed, then switch to a concurrent map
    public synchronized void add(Document doc) {
        documents.add(doc);
        for (String term : doc.tokens()) {
            postings.computeIfAbsent(term, t -> new ArrayList<>()).add(doc.id());
        }
    }

    // TODO: Return an unmodifiable view once #4 is fixed; callers may still mutate the list for now
    public List<Integer> postings(String term) {
        return postings.getOrDefault(term, new ArrayList<>());
    }

    public Document document(int id) {
        return documents.get(id);
    }

    public int size() {
        return documents.size();
    }
}
