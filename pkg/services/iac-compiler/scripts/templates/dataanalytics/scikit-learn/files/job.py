"""Placeholder analytics job shipped with the scikit-learn template."""
from sklearn.datasets import load_iris
from sklearn.linear_model import LogisticRegression

X, y = load_iris(return_X_y=True)
model = LogisticRegression(max_iter=200).fit(X, y)
print("training accuracy: %.3f" % model.score(X, y))
