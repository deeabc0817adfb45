import pandas as pd
import numpy as np


class CustomOneHotEncoder:
    def __init__(self, separator="="):
        self.categories = []
        self.separator = separator
        self.column = None

    def fit(self, df, categorical_column):
        """
        Records the distinct values of the categorical column in order of first appearance.

        Parameters:
        - df: pandas DataFrame with the data
        - categorical_column: str, name of the categorical column to expand

        Returns:
        - self: fitted encoder
        """
        self.column = categorical_column
        values = df[categorical_column].astype(str)
        self.categories = list(pd.unique(values))
        return self

    @property
    def dummy_names(self):
        return [f"{self.column}{self.separator}{cat}" for cat in self.categories]

    def transform(self, data):
        """
        Expands the column into one 0/1 column per fitted category.
        Unseen categories get all zeros.
        """
        values = data.astype(str).to_numpy()
        dummies = np.column_stack([(values == cat).astype(float) for cat in self.categories])
        return pd.DataFrame(dummies, columns=self.dummy_names, index=data.index)

    def fit_transform(self, df, categorical_column):
        return self.fit(df, categorical_column).transform(df[categorical_column])
